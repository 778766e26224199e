#pragma once

#include "kolflow/error.hpp"
#include "kolflow/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace kolflow {

struct InputPort {
  std::string name;
  ArtifactType type;
  bool required = true;

  bool operator==(const InputPort &) const = default;
};

struct OutputPort {
  std::string name;
  ArtifactType type;

  bool operator==(const OutputPort &) const = default;
};

struct LocalBinding {
  std::string algorithm_id;
  bool operator==(const LocalBinding &) const = default;
};

struct RemoteBinding {
  std::string base_url;
  std::uint32_t timeout_ms = 30000;
  bool operator==(const RemoteBinding &) const = default;
};

struct BackendBinding {
  std::variant<LocalBinding, RemoteBinding> target;
  /// Forces serialized invocation of this backend across nodes.
  bool exclusive = false;

  bool is_local() const { return std::holds_alternative<LocalBinding>(target); }
  const LocalBinding &local() const { return std::get<LocalBinding>(target); }
  const RemoteBinding &remote() const { return std::get<RemoteBinding>(target); }

  bool operator==(const BackendBinding &) const = default;
};

struct ServiceDescriptor {
  std::string service_id;
  Capability capability = Capability::Tryon;
  std::vector<InputPort> inputs;
  std::vector<OutputPort> outputs;
  BackendBinding backend;
  std::string version = "1";

  const InputPort *find_input(std::string_view port) const;
  const OutputPort *find_output(std::string_view port) const;

  bool operator==(const ServiceDescriptor &) const = default;
};

/// Throws InvalidDescriptor naming the violated invariant.
void validate_descriptor(const ServiceDescriptor &descriptor);

nlohmann::json to_json(const ServiceDescriptor &descriptor);
/// Throws InvalidDescriptor on schema errors, UnknownCapability on unknown
/// capability names.
ServiceDescriptor descriptor_from_json(const nlohmann::json &doc);

Capability capability_or_throw(std::string_view name);
ArtifactType artifact_type_or_throw(std::string_view name, ErrorCode code);

enum class DependencyRule { Before, Allowed, Forbidden };

std::string_view to_string(DependencyRule rule);
std::optional<DependencyRule> parse_dependency_rule(std::string_view name);

/// Ordered capability-pair rules. Missing entries mean `allowed`.
class DependencyMatrix {
public:
  using Key = std::pair<Capability, Capability>;

  /// Default ordering: tryon ≺ makeup ≺ background ≺ object_interaction,
  /// tryon ≺ face_extract_align ≺ makeup ≺ face_reintegrate ≺ background.
  static DependencyMatrix defaults();

  DependencyRule rule(Capability from, Capability to) const;

  /// Throws ConflictingRule when (to, from) is already `before` and `rule`
  /// is `before`.
  void set(Capability from, Capability to, DependencyRule rule);

  /// True when `a` must precede `b`: a chain of `before` rules leads from a
  /// to b.
  bool precedes(Capability a, Capability b) const;

  /// True when the `before` relation has no cycle.
  bool is_acyclic() const;

  const std::map<Key, DependencyRule> &entries() const noexcept {
    return entries_;
  }

  bool operator==(const DependencyMatrix &) const = default;

private:
  std::map<Key, DependencyRule> entries_;
};

/// Immutable registry value: descriptors plus dependency rules.
struct RegistryState {
  std::map<std::string, ServiceDescriptor> services;
  DependencyMatrix rules = DependencyMatrix::defaults();

  const ServiceDescriptor &service(std::string_view id) const; ///< UnknownService

  bool operator==(const RegistryState &) const = default;
};

struct PortRef {
  std::string service;
  std::string port;
};

enum class EdgeProblem { TypeMismatch, ForbiddenPair };

std::string_view to_string(EdgeProblem problem);

struct EdgeVerdict {
  std::optional<EdgeProblem> problem;
  std::string reason;

  bool compatible() const { return !problem.has_value(); }
};

/// Pure compatibility check between an output port and an input port.
/// Throws UnknownService / UnknownPort.
EdgeVerdict check_edge(const RegistryState &state, const PortRef &from,
                       const PortRef &to);

nlohmann::json to_json(const DependencyMatrix &matrix);
DependencyMatrix dependency_matrix_from_json(const nlohmann::json &doc);

/// Thread-safe registry. Mutations are serialized and swap in a fresh
/// RegistryState; readers work on immutable snapshots.
class Registry {
public:
  /// `local_algorithms` are the algorithm ids local bindings may name.
  explicit Registry(std::set<std::string> local_algorithms = {});

  std::string register_service(const ServiceDescriptor &descriptor);
  ServiceDescriptor unregister_service(std::string_view service_id);
  std::vector<ServiceDescriptor>
  list_services(std::optional<Capability> filter = std::nullopt) const;
  std::optional<ServiceDescriptor> find(std::string_view service_id) const;

  DependencyMatrix set_dependency_rule(Capability from, Capability to,
                                       DependencyRule rule);

  EdgeVerdict check_edge(const PortRef &from, const PortRef &to) const;

  std::shared_ptr<const RegistryState> snapshot() const;
  /// Replaces the whole state (used when loading a snapshot file).
  void restore(RegistryState state);

  const std::set<std::string> &local_algorithms() const noexcept {
    return local_algorithms_;
  }

  /// {"services": [...], "rules": [{from, to, rule}]}
  nlohmann::json to_snapshot_json() const;
  void load_snapshot_json(const nlohmann::json &doc);

private:
  std::set<std::string> local_algorithms_;
  mutable std::mutex mutex_;
  std::shared_ptr<const RegistryState> state_;
};

} // namespace kolflow
