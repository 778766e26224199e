#pragma once

#include "kolflow/artifact.hpp"
#include "kolflow/registry.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace kolflow {

struct PipelineNode {
  std::string id;
  std::string service;
  /// Backend parameters passed through untouched. Empty object when unset.
  nlohmann::json params = nlohmann::json::object();

  bool operator==(const PipelineNode &) const = default;
};

struct PipelineEdge {
  std::string from;
  std::string from_port;
  std::string to;
  std::string to_port;

  auto operator<=>(const PipelineEdge &) const = default;
};

/// A DAG of service nodes plus external input bindings.
///
/// `inputs` maps "<node>.<port>" to an artifact ref string. Tools may also
/// accept file paths there and import them before validation.
struct PipelineSpec {
  std::vector<PipelineNode> nodes;
  std::vector<PipelineEdge> edges;
  std::map<std::string, std::string> inputs;

  /// Canonical document: keys sorted, edges sorted, no whitespace.
  nlohmann::json to_json() const;
  std::string canonical() const;
  Digest spec_hash() const;
  /// to_json() plus a "spec_hash" key.
  nlohmann::json to_document() const;

  /// Throws BadRequest on schema errors.
  static PipelineSpec from_json(const nlohmann::json &doc);

  const PipelineNode *find_node(std::string_view id) const;

  bool operator==(const PipelineSpec &) const = default;
};

std::string input_key(std::string_view node, std::string_view port);
/// Splits "<node>.<port>" at the first dot.
std::optional<std::pair<std::string, std::string>> split_input_key(std::string_view key);

/// Fixed query roles: identity, garment, makeup_ref, background_spec,
/// object_ref, landmarks.
std::optional<ArtifactType> role_type(std::string_view role);
std::vector<std::pair<std::string, ArtifactType>> all_roles();

struct CapabilityQuery {
  std::set<Capability> capabilities;
  bool align_faces = false;
  /// role → ref; the ref type must equal the role's type.
  std::map<std::string, ArtifactRef> provided_inputs;
  /// Explicit service choice per capability.
  std::map<Capability, std::string> services;

  /// {"capabilities": [...], "align_faces": bool, "inputs": {role: ref},
  ///  "services": {capability: service_id}}. Throws BadQuery.
  static CapabilityQuery from_json(const nlohmann::json &doc);
  nlohmann::json to_json() const;
};

/// Kahn's algorithm; among ready nodes the lexicographically smallest id is
/// emitted first. Throws CycleDetected with details {"cycle": [ids...]}.
std::vector<std::string>
topological_order(const std::vector<std::string> &nodes,
                  const std::vector<std::pair<std::string, std::string>> &edges);

struct Bindings {
  std::vector<PipelineEdge> edges;
  std::map<std::string, std::string> source_bindings;
};

/// Binds every input port of `ordered` nodes: nearest upstream output of the
/// same type first, otherwise the unique provided input of that type.
/// Throws UnboundPort or AmbiguousExternalInput.
Bindings bind_io(const std::vector<PipelineNode> &ordered, const RegistryState &state,
                 const std::map<std::string, ArtifactRef> &provided_inputs);

struct Violation {
  std::string code; ///< e.g. "CYCLE_DETECTED", "ORDER_RULE_VIOLATED"
  std::string message;

  bool operator==(const Violation &) const = default;
};

/// All problems with `spec` against `state`; empty means valid.
std::vector<Violation> validate_pipeline(const PipelineSpec &spec,
                                         const RegistryState &state);

nlohmann::json to_json(const std::vector<Violation> &violations);

/// Throws UnsatisfiableQuery, AmbiguousService, CyclicConstraints, BadQuery.
PipelineSpec synthesize_pipeline(const CapabilityQuery &query,
                                 const RegistryState &state);

} // namespace kolflow
