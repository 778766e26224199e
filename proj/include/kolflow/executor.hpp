#pragma once

#include "kolflow/backends.hpp"
#include "kolflow/flow.hpp"
#include "kolflow/registry.hpp"
#include "kolflow/store.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace kolflow {

enum class NodeStatus { Pending, Running, Succeeded, Failed, Skipped };
enum class RunStatus { Running, Succeeded, Failed, Cancelled };

std::string_view to_string(NodeStatus status);
std::string_view to_string(RunStatus status);

struct NodeError {
  std::string code; ///< API code, e.g. "BACKEND_UNREACHABLE"
  std::string message;
};

struct NodeState {
  NodeStatus status = NodeStatus::Pending;
  std::map<std::string, ArtifactRef> outputs;
  std::int64_t duration_ms = 0;
  std::optional<NodeError> error;
  std::string skip_reason;
  /// Logical clock values; 0 until the transition happens.
  std::uint64_t started_seq = 0;
  std::uint64_t finished_seq = 0;
  std::int64_t started_at_ms = 0;
  std::int64_t finished_at_ms = 0;
};

struct RunRecord {
  std::string run_id;
  std::string spec_hash;
  std::vector<std::string> node_order;
  std::map<std::string, NodeState> nodes;
  std::int64_t started_at_ms = 0;
  std::int64_t finished_at_ms = 0;
  RunStatus status = RunStatus::Running;

  bool terminal() const { return status != RunStatus::Running; }

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json &doc);
};

struct RunEvent {
  std::uint64_t seq = 0;
  std::string kind; ///< run_started, node_started, node_finished, run_finished
  std::string node;
  nlohmann::json data = nlohmann::json::object();

  nlohmann::json to_json() const;
};

struct RunOptions {
  std::size_t max_parallel = 1;
  bool fail_fast = false;
  /// Reuse stored outputs keyed by (service, version, params, input hashes).
  bool memoize = false;
};

/// Runs validated pipelines. Each run has one driver thread that owns all
/// state transitions; node invocations fan out to up to max_parallel
/// worker threads. Records are persisted to
/// `<runs_root>/<run_id>/record.json` and node outputs to
/// `<runs_root>/<run_id>/nodes/<node>/<port>.<ext>`.
class Executor {
public:
  Executor(std::shared_ptr<Registry> registry, ArtifactStore store,
           std::shared_ptr<const BackendInvoker> backends, std::filesystem::path runs_root);
  ~Executor();

  Executor(const Executor &) = delete;
  Executor &operator=(const Executor &) = delete;

  /// Validates, runs to completion, returns the terminal record.
  /// Throws ValidationFailed (details: violations) or StoreUnavailable.
  RunRecord execute_run(const PipelineSpec &spec, const RunOptions &options = {});

  /// Validates and starts asynchronously; returns the run id.
  std::string start_run(const PipelineSpec &spec, const RunOptions &options = {});

  /// Consistent snapshot. Falls back to the persisted record of runs from
  /// earlier processes. Throws UnknownRun.
  RunRecord run_status(const std::string &run_id) const;

  /// Stops scheduling, waits for in-flight nodes, returns the terminal
  /// record. Throws UnknownRun or AlreadyTerminal.
  RunRecord cancel_run(const std::string &run_id);

  RunRecord wait(const std::string &run_id) const;

  /// Events with index ≥ `from`, blocking up to `timeout` for new ones.
  /// `finished` is set once the run is terminal and all events were read.
  std::vector<RunEvent> events(const std::string &run_id, std::size_t from,
                               std::chrono::milliseconds timeout, bool *finished = nullptr) const;

  /// Invokes a node's backend with type checks on both sides. Throws
  /// MalformedInput, OutputTypeMismatch, and whatever the backend raises.
  PortMap invoke_node(const ServiceDescriptor &service, const PortMap &inputs,
                      const nlohmann::json &params) const;

  const ArtifactStore &store() const noexcept { return store_; }
  const std::filesystem::path &runs_root() const noexcept { return runs_root_; }

private:
  struct Run;

  std::shared_ptr<Run> find_run(const std::string &run_id) const;
  void drive(const std::shared_ptr<Run> &run);
  void run_node(const std::shared_ptr<Run> &run, std::size_t index);
  void persist(const Run &run) const;

  std::shared_ptr<Registry> registry_;
  ArtifactStore store_;
  std::shared_ptr<const BackendInvoker> backends_;
  std::filesystem::path runs_root_;

  mutable std::mutex runs_mutex_;
  std::map<std::string, std::shared_ptr<Run>> runs_;
};

std::int64_t now_ms();

} // namespace kolflow
