#pragma once

#include "kolflow/artifact.hpp"
#include "kolflow/registry.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

namespace kolflow {

using PortMap = std::map<std::string, Artifact>;

struct ParameterSpec {
  std::string type; ///< "integer", "number", "string", "boolean", "object"
  nlohmann::json default_value;
};

struct AlgorithmDescriptor {
  std::string algorithm_id;
  Capability capability = Capability::Tryon;
  bool deterministic = true;
  std::vector<InputPort> inputs;
  std::vector<OutputPort> outputs;
  std::map<std::string, ParameterSpec> parameters;

  /// Wire form served at GET /v1/descriptor.
  nlohmann::json to_json() const;
  /// Throws ProtocolError on schema errors, SignatureMismatch when the
  /// advertised ports break descriptor invariants.
  static AlgorithmDescriptor from_json(const nlohmann::json &doc);
};

using AlgorithmFn = std::function<PortMap(const PortMap &inputs, const nlohmann::json &params)>;

struct Algorithm {
  AlgorithmDescriptor descriptor;
  AlgorithmFn run;
};

/// Checks `inputs` against the signature: MalformedInput on missing required
/// ports, unknown ports, or type mismatches.
void check_inputs(const std::vector<InputPort> &signature, const PortMap &inputs);

/// Fills defaults and checks types. BadParams on unknown names or wrong types.
nlohmann::json resolve_params(const std::map<std::string, ParameterSpec> &spec,
                              const nlohmann::json &params);

/// Local algorithm table. The built-in set holds the four generative mocks
/// plus the face extract/reintegrate pair.
class AlgorithmCatalog {
public:
  static AlgorithmCatalog with_builtins();

  void add(Algorithm algorithm);
  const Algorithm *find(std::string_view algorithm_id) const;
  std::set<std::string> ids() const;

  /// Throws UnknownAlgorithm, MalformedInput, BadParams.
  PortMap invoke_local(std::string_view algorithm_id, const PortMap &inputs,
                       const nlohmann::json &params = nlohmann::json::object()) const;

private:
  std::map<std::string, Algorithm, std::less<>> algorithms_;
};

/// Service descriptors binding each built-in algorithm under its own id
/// (mock_tryon, mock_makeup, mock_background, mock_object,
/// face_extract_align, face_reintegrate).
std::vector<ServiceDescriptor> builtin_services();

/// The Engine's uniform call surface over local and remote backends.
class BackendInvoker {
public:
  explicit BackendInvoker(std::shared_ptr<const AlgorithmCatalog> catalog);

  PortMap invoke(const ServiceDescriptor &service, const PortMap &inputs,
                 const nlohmann::json &params) const;

  const AlgorithmCatalog &catalog() const { return *catalog_; }

private:
  std::shared_ptr<const AlgorithmCatalog> catalog_;
  mutable std::mutex exclusive_mutex_;
  mutable std::map<std::string, std::shared_ptr<std::mutex>> exclusive_locks_;
};

} // namespace kolflow
