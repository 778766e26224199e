#include "kolflow/engine.hpp"

#include "kolflow/remote.hpp"

#include <fstream>

namespace kolflow {

using nlohmann::json;
namespace fs = std::filesystem;

Engine::Engine(const EngineConfig &config, std::shared_ptr<const AlgorithmCatalog> catalog)
    : catalog_(catalog ? std::move(catalog)
                       : std::make_shared<const AlgorithmCatalog>(AlgorithmCatalog::with_builtins())),
      registry_(std::make_shared<Registry>(catalog_->ids())),
      store_([&] {
        std::error_code ec;
        fs::create_directories(config.store_root, ec);
        return ArtifactStore(config.store_root);
      }()),
      backends_(std::make_shared<const BackendInvoker>(catalog_)) {
  executor_ = std::make_unique<Executor>(registry_, store_, backends_,
                                         config.runs_root.value_or(config.store_root / "runs"));
  if (config.registry_snapshot) {
    std::error_code ec;
    if (fs::exists(*config.registry_snapshot, ec)) {
      std::ifstream in(*config.registry_snapshot);
      auto doc = json::parse(in, nullptr, false);
      if (doc.is_discarded())
        throw Error(ErrorCode::BadConfig, "registry snapshot is not valid JSON: " +
                                              config.registry_snapshot->string());
      registry_->load_snapshot_json(doc);
    }
  }
  if (config.with_mocks) register_builtins();
}

std::string Engine::register_service(const ServiceDescriptor &descriptor) {
  validate_descriptor(descriptor);
  if (!descriptor.backend.is_local())
    verify_remote_signature(descriptor, fetch_descriptor(descriptor.backend.remote()));
  return registry_->register_service(descriptor);
}

ServiceDescriptor Engine::unregister_service(std::string_view service_id) {
  return registry_->unregister_service(service_id);
}

void Engine::register_builtins() {
  for (const auto &d : builtin_services())
    if (!registry_->find(d.service_id)) registry_->register_service(d);
}

PipelineSpec Engine::synthesize(const CapabilityQuery &query) const {
  return synthesize_pipeline(query, *registry_->snapshot());
}

std::vector<Violation> Engine::validate(const PipelineSpec &spec) const {
  return validate_pipeline(spec, *registry_->snapshot());
}

void Engine::save_snapshot(const fs::path &path) const {
  atomic_write(path, to_bytes(registry_->to_snapshot_json().dump(2) + "\n"));
}

Artifact artifact_from_file(const fs::path &path, ArtifactType type) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw Error(ErrorCode::NotFound, "no such file: " + path.string());
  return Artifact::decode(type, read_file(path));
}

void import_file_inputs(Engine &engine, PipelineSpec &spec, const fs::path &base_dir) {
  const auto state = engine.registry().snapshot();
  for (auto &[key, value] : spec.inputs) {
    try {
      (void)ArtifactRef::parse(value);
      continue;
    } catch (const Error &) {
    }
    const auto split = split_input_key(key);
    if (!split) continue;
    const auto *node = spec.find_node(split->first);
    if (!node) continue;
    const auto it = state->services.find(node->service);
    if (it == state->services.end()) continue;
    const auto *port = it->second.find_input(split->second);
    if (!port) continue;
    fs::path path(value);
    if (path.is_relative()) path = base_dir / path;
    value = engine.put(artifact_from_file(path, port->type)).str();
  }
}

} // namespace kolflow
