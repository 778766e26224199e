#pragma once

#include "kolflow/backends.hpp"
#include "kolflow/executor.hpp"
#include "kolflow/flow.hpp"
#include "kolflow/registry.hpp"
#include "kolflow/store.hpp"

#include <filesystem>
#include <memory>
#include <optional>

namespace kolflow {

struct EngineConfig {
  std::filesystem::path store_root;
  /// Defaults to `<store_root>/runs`.
  std::optional<std::filesystem::path> runs_root;
  std::optional<std::filesystem::path> registry_snapshot;
  bool with_mocks = false;
};

/// Centralized controller: owns the registry, store, backends and executor
/// and exposes the operations shared by the HTTP API, the CLI and the
/// Python module.
class Engine {
public:
  explicit Engine(const EngineConfig &config,
                  std::shared_ptr<const AlgorithmCatalog> catalog = nullptr);

  Registry &registry() { return *registry_; }
  const Registry &registry() const { return *registry_; }
  const ArtifactStore &store() const { return store_; }
  Executor &executor() { return *executor_; }
  const AlgorithmCatalog &catalog() const { return *catalog_; }

  /// Remote services have their advertised descriptor fetched and checked
  /// against the declared ports first (SignatureMismatch on disagreement).
  std::string register_service(const ServiceDescriptor &descriptor);
  ServiceDescriptor unregister_service(std::string_view service_id);
  /// Registers every built-in service not already present.
  void register_builtins();

  PipelineSpec synthesize(const CapabilityQuery &query) const;
  std::vector<Violation> validate(const PipelineSpec &spec) const;

  ArtifactRef put(const Artifact &artifact) const { return store_.put(artifact); }

  void save_snapshot(const std::filesystem::path &path) const;

private:
  std::shared_ptr<const AlgorithmCatalog> catalog_;
  std::shared_ptr<Registry> registry_;
  ArtifactStore store_;
  std::shared_ptr<const BackendInvoker> backends_;
  std::unique_ptr<Executor> executor_;
};

/// Reads a file and wraps it as an artifact of `type` (PNG for rasters,
/// UTF-8 for text, JSON for landmarks/sessions). Throws NotFound or
/// MalformedPayload.
Artifact artifact_from_file(const std::filesystem::path &path, ArtifactType type);

/// Replaces every `inputs` value that is not an artifact ref with the ref of
/// the file it names (resolved against `base_dir`), imported with the type
/// of the port it feeds. Values naming unknown nodes or ports are left for
/// validation to report.
void import_file_inputs(Engine &engine, PipelineSpec &spec, const std::filesystem::path &base_dir);

} // namespace kolflow
