#include "kolflow/executor.hpp"

#include <condition_variable>
#include <deque>
#include <fstream>
#include <random>
#include <thread>

namespace kolflow {

using nlohmann::json;
namespace fs = std::filesystem;

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string_view to_string(NodeStatus status) {
  switch (status) {
  case NodeStatus::Pending:
    return "pending";
  case NodeStatus::Running:
    return "running";
  case NodeStatus::Succeeded:
    return "succeeded";
  case NodeStatus::Failed:
    return "failed";
  case NodeStatus::Skipped:
    return "skipped";
  }
  return "pending";
}

std::string_view to_string(RunStatus status) {
  switch (status) {
  case RunStatus::Running:
    return "running";
  case RunStatus::Succeeded:
    return "succeeded";
  case RunStatus::Failed:
    return "failed";
  case RunStatus::Cancelled:
    return "cancelled";
  }
  return "running";
}

namespace {

NodeStatus node_status_from(std::string_view s) {
  for (auto st : {NodeStatus::Pending, NodeStatus::Running, NodeStatus::Succeeded,
                  NodeStatus::Failed, NodeStatus::Skipped})
    if (to_string(st) == s) return st;
  throw Error(ErrorCode::BadRequest, "unknown node status '" + std::string(s) + "'");
}

RunStatus run_status_from(std::string_view s) {
  for (auto st : {RunStatus::Running, RunStatus::Succeeded, RunStatus::Failed, RunStatus::Cancelled})
    if (to_string(st) == s) return st;
  throw Error(ErrorCode::BadRequest, "unknown run status '" + std::string(s) + "'");
}

std::string new_run_id() {
  static std::mutex mutex;
  static std::mt19937_64 rng{std::random_device{}()};
  static std::uint64_t counter = 0;
  std::lock_guard lock(mutex);
  char buf[40];
  std::snprintf(buf, sizeof buf, "run-%013llx-%04llx",
                static_cast<unsigned long long>(rng() & 0xFFFFFFFFFFFFFULL),
                static_cast<unsigned long long>(++counter & 0xFFFF));
  return buf;
}

} // namespace

json RunRecord::to_json() const {
  json nodes_doc = json::object();
  for (const auto &[id, n] : nodes) {
    json outputs = json::object();
    for (const auto &[port, ref] : n.outputs) outputs[port] = ref.str();
    json jn{{"status", std::string(to_string(n.status))},
            {"outputs", std::move(outputs)},
            {"duration_ms", n.duration_ms},
            {"started_seq", n.started_seq},
            {"finished_seq", n.finished_seq},
            {"started_at", n.started_at_ms},
            {"finished_at", n.finished_at_ms}};
    if (n.error) jn["error"] = {{"code", n.error->code}, {"message", n.error->message}};
    if (!n.skip_reason.empty()) jn["skip_reason"] = n.skip_reason;
    nodes_doc[id] = std::move(jn);
  }
  return {{"run_id", run_id},
          {"spec_hash", spec_hash},
          {"status", std::string(to_string(status))},
          {"started_at", started_at_ms},
          {"finished_at", finished_at_ms},
          {"node_order", node_order},
          {"nodes", std::move(nodes_doc)}};
}

RunRecord RunRecord::from_json(const json &doc) {
  try {
    RunRecord r;
    r.run_id = doc.at("run_id").get<std::string>();
    r.spec_hash = doc.at("spec_hash").get<std::string>();
    r.status = run_status_from(doc.at("status").get<std::string>());
    r.started_at_ms = doc.at("started_at").get<std::int64_t>();
    r.finished_at_ms = doc.at("finished_at").get<std::int64_t>();
    r.node_order = doc.at("node_order").get<std::vector<std::string>>();
    for (const auto &[id, jn] : doc.at("nodes").items()) {
      NodeState n;
      n.status = node_status_from(jn.at("status").get<std::string>());
      for (const auto &[port, ref] : jn.at("outputs").items())
        n.outputs.emplace(port, ArtifactRef::parse(ref.get<std::string>()));
      n.duration_ms = jn.at("duration_ms").get<std::int64_t>();
      n.started_seq = jn.at("started_seq").get<std::uint64_t>();
      n.finished_seq = jn.at("finished_seq").get<std::uint64_t>();
      n.started_at_ms = jn.at("started_at").get<std::int64_t>();
      n.finished_at_ms = jn.at("finished_at").get<std::int64_t>();
      if (jn.contains("error"))
        n.error = NodeError{jn["error"].at("code").get<std::string>(),
                            jn["error"].at("message").get<std::string>()};
      n.skip_reason = jn.value("skip_reason", std::string());
      r.nodes.emplace(id, std::move(n));
    }
    return r;
  } catch (const json::exception &e) {
    throw Error(ErrorCode::BadRequest, std::string("malformed run record: ") + e.what());
  }
}

json RunEvent::to_json() const {
  json doc{{"seq", seq}, {"kind", kind}};
  if (!node.empty()) doc["node"] = node;
  for (const auto &[k, v] : data.items()) doc[k] = v;
  return doc;
}

struct Executor::Run {
  PipelineSpec spec;
  std::shared_ptr<const RegistryState> registry;
  RunOptions options;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<std::size_t>> preds;
  std::vector<std::vector<std::size_t>> succs;
  fs::path dir;

  mutable std::mutex mutex;
  mutable std::condition_variable cv;
  RunRecord record;
  std::vector<RunEvent> events;
  std::uint64_t clock = 0;
  std::size_t running = 0;
  bool cancel_requested = false;
  std::thread driver;
  std::vector<std::thread> workers;

  NodeState &state(std::size_t i) { return record.nodes.at(spec.nodes[i].id); }

  void emit(std::string kind, std::string node, json data = json::object()) {
    events.push_back({++clock, std::move(kind), std::move(node), std::move(data)});
    cv.notify_all();
  }
};

Executor::Executor(std::shared_ptr<Registry> registry, ArtifactStore store,
                   std::shared_ptr<const BackendInvoker> backends, fs::path runs_root)
    : registry_(std::move(registry)), store_(std::move(store)), backends_(std::move(backends)),
      runs_root_(std::move(runs_root)) {
  std::error_code ec;
  fs::create_directories(runs_root_, ec);
  if (ec || !fs::is_directory(runs_root_))
    throw Error(ErrorCode::StoreUnavailable, "cannot create runs root " + runs_root_.string());
}

Executor::~Executor() {
  std::vector<std::shared_ptr<Run>> runs;
  {
    std::lock_guard lock(runs_mutex_);
    for (auto &[id, r] : runs_) runs.push_back(r);
  }
  for (auto &r : runs)
    if (r->driver.joinable()) r->driver.join();
}

PortMap Executor::invoke_node(const ServiceDescriptor &service, const PortMap &inputs,
                              const json &params) const {
  check_inputs(service.inputs, inputs);
  PortMap outputs = backends_->invoke(service, inputs, params);
  for (const auto &port : service.outputs) {
    auto it = outputs.find(port.name);
    if (it == outputs.end())
      throw Error(ErrorCode::OutputTypeMismatch,
                  "backend of '" + service.service_id + "' did not return output '" + port.name + "'");
    if (it->second.type() != port.type)
      throw Error(ErrorCode::OutputTypeMismatch,
                  "backend of '" + service.service_id + "' returned " +
                      std::string(to_string(it->second.type())) + " for '" + port.name +
                      "', declared " + std::string(to_string(port.type)));
  }
  for (const auto &[name, art] : outputs)
    if (!service.find_output(name))
      throw Error(ErrorCode::OutputTypeMismatch,
                  "backend of '" + service.service_id + "' returned undeclared output '" + name + "'");
  return outputs;
}

std::string Executor::start_run(const PipelineSpec &spec, const RunOptions &options) {
  if (options.max_parallel == 0) throw Error(ErrorCode::BadRequest, "max_parallel must be >= 1");
  std::error_code ec;
  if (!fs::is_directory(store_.root(), ec))
    throw Error(ErrorCode::StoreUnavailable, "artifact store is unavailable: " + store_.root().string());

  auto snapshot = registry_->snapshot();
  auto violations = validate_pipeline(spec, *snapshot);
  for (const auto &[key, value] : spec.inputs) {
    try {
      if (!store_.contains(ArtifactRef::parse(value)))
        violations.push_back({"MISSING_INPUT", "input '" + key + "' is not in the store: " + value});
    } catch (const Error &) {
      // already reported as BAD_INPUT_REF
    }
  }
  if (!violations.empty())
    throw Error(ErrorCode::ValidationFailed,
                "pipeline failed validation with " + std::to_string(violations.size()) + " violation(s)",
                json{{"violations", to_json(violations)}});

  auto run = std::make_shared<Run>();
  run->spec = spec;
  run->registry = std::move(snapshot);
  run->options = options;
  const std::size_t n = spec.nodes.size();
  run->preds.resize(n);
  run->succs.resize(n);
  for (std::size_t i = 0; i < n; ++i) run->index[spec.nodes[i].id] = i;
  for (const auto &e : spec.edges) {
    const auto a = run->index.at(e.from);
    const auto b = run->index.at(e.to);
    run->preds[b].push_back(a);
    run->succs[a].push_back(b);
  }
  run->record.run_id = new_run_id();
  run->record.spec_hash = to_hex(spec.spec_hash());
  for (const auto &node : spec.nodes) {
    run->record.node_order.push_back(node.id);
    run->record.nodes.emplace(node.id, NodeState{});
  }
  run->record.started_at_ms = now_ms();
  run->dir = runs_root_ / run->record.run_id;

  {
    std::lock_guard lock(runs_mutex_);
    runs_.emplace(run->record.run_id, run);
  }
  {
    std::lock_guard lock(run->mutex);
    run->emit("run_started", "", {{"spec_hash", run->record.spec_hash}});
    persist(*run);
  }
  run->driver = std::thread([this, run] { drive(run); });
  return run->record.run_id;
}

RunRecord Executor::execute_run(const PipelineSpec &spec, const RunOptions &options) {
  return wait(start_run(spec, options));
}

void Executor::drive(const std::shared_ptr<Run> &run) {
  std::unique_lock lock(run->mutex);
  const std::size_t n = run->spec.nodes.size();
  bool any_failed = false;

  for (;;) {
    const bool halt = run->cancel_requested || (run->options.fail_fast && any_failed);
    if (!halt) {
      for (std::size_t i = 0; i < n && run->running < run->options.max_parallel; ++i) {
        auto &st = run->state(i);
        if (st.status != NodeStatus::Pending) continue;
        bool ready = true;
        for (auto p : run->preds[i]) ready = ready && run->state(p).status == NodeStatus::Succeeded;
        if (!ready) continue;
        st.status = NodeStatus::Running;
        st.started_seq = run->clock + 1;
        st.started_at_ms = now_ms();
        run->emit("node_started", run->spec.nodes[i].id);
        ++run->running;
        run->workers.emplace_back([this, run, i] { run_node(run, i); });
      }
      persist(*run);
    }
    if (run->running == 0) break;
    const auto before = run->clock;
    run->cv.wait(lock, [&] { return run->clock != before; });
    for (std::size_t i = 0; i < n; ++i)
      any_failed = any_failed || run->state(i).status == NodeStatus::Failed;
  }

  bool all_ok = true;
  for (std::size_t i = 0; i < n; ++i) {
    auto &st = run->state(i);
    if (st.status == NodeStatus::Pending) {
      st.status = NodeStatus::Skipped;
      st.skip_reason = run->cancel_requested ? "run cancelled"
                       : any_failed          ? "upstream failure"
                                             : "not scheduled";
    }
    all_ok = all_ok && st.status == NodeStatus::Succeeded;
  }
  run->record.status = all_ok                  ? RunStatus::Succeeded
                       : run->cancel_requested ? RunStatus::Cancelled
                                               : RunStatus::Failed;
  run->record.finished_at_ms = now_ms();
  run->emit("run_finished", "", {{"status", std::string(to_string(run->record.status))}});
  persist(*run);

  auto workers = std::move(run->workers);
  lock.unlock();
  for (auto &w : workers) w.join();
  run->cv.notify_all();
}

void Executor::run_node(const std::shared_ptr<Run> &run, std::size_t index) {
  const auto &node = run->spec.nodes[index];
  const auto start = std::chrono::steady_clock::now();
  std::map<std::string, ArtifactRef> produced;
  std::optional<NodeError> failure;

  try {
    const auto &service = run->registry->service(node.service);

    std::map<std::string, ArtifactRef> input_refs;
    {
      std::lock_guard lock(run->mutex);
      for (const auto &e : run->spec.edges)
        if (e.to == node.id) input_refs.emplace(e.to_port, run->record.nodes.at(e.from).outputs.at(e.from_port));
    }
    for (const auto &[key, value] : run->spec.inputs) {
      const auto parts = split_input_key(key);
      if (parts && parts->first == node.id) input_refs.emplace(parts->second, ArtifactRef::parse(value));
    }

    std::optional<fs::path> memo_path;
    if (run->options.memoize) {
      json key{{"service", service.service_id}, {"version", service.version}, {"params", node.params}};
      for (const auto &[port, ref] : input_refs) key["inputs"][port] = ref.str();
      memo_path = store_.root() / "memo" / (to_hex(sha256(key.dump())) + ".json");
      std::error_code ec;
      if (fs::is_regular_file(*memo_path, ec)) {
        const auto doc = json::parse(to_string(read_file(*memo_path)), nullptr, false);
        if (doc.is_object()) {
          for (const auto &[port, ref] : doc.items()) produced.emplace(port, ArtifactRef::parse(ref.get<std::string>()));
          bool complete = produced.size() == service.outputs.size();
          for (const auto &[port, ref] : produced) complete = complete && store_.contains(ref);
          if (!complete) produced.clear();
        }
      }
    }

    if (produced.empty()) {
      PortMap inputs;
      for (const auto &[port, ref] : input_refs) inputs.emplace(port, store_.get(ref));
      const PortMap outputs = invoke_node(service, inputs, node.params);
      for (const auto &[port, art] : outputs) produced.emplace(port, store_.put(art.with_producer(node.id)));
      if (memo_path) {
        json doc = json::object();
        for (const auto &[port, ref] : produced) doc[port] = ref.str();
        atomic_write(*memo_path, to_bytes(doc.dump()));
      }
    }
    for (const auto &[port, ref] : produced) {
      const auto target = run->dir / "nodes" / node.id / (port + "." + std::string(file_extension(ref.type)));
      atomic_write(target, read_file(store_.path_for(ref)));
    }
  } catch (const Error &e) {
    failure = NodeError{std::string(api_code(e.code())), e.what()};
  } catch (const std::exception &e) {
    failure = NodeError{std::string(api_code(ErrorCode::BackendError)), e.what()};
  }

  const auto elapsed =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();

  std::lock_guard lock(run->mutex);
  auto &st = run->state(index);
  st.duration_ms = elapsed;
  st.finished_at_ms = now_ms();
  st.finished_seq = run->clock + 1;
  --run->running;
  if (!failure) {
    st.status = NodeStatus::Succeeded;
    st.outputs = std::move(produced);
    json refs = json::object();
    for (const auto &[port, ref] : st.outputs) refs[port] = ref.str();
    run->emit("node_finished", node.id, {{"status", "succeeded"}, {"outputs", refs}});
  } else {
    st.status = NodeStatus::Failed;
    st.error = failure;
    run->emit("node_finished", node.id,
              {{"status", "failed"}, {"error", {{"code", failure->code}, {"message", failure->message}}}});
    std::deque<std::size_t> queue(run->succs[index].begin(), run->succs[index].end());
    while (!queue.empty()) {
      const auto d = queue.front();
      queue.pop_front();
      auto &ds = run->state(d);
      if (ds.status != NodeStatus::Pending) continue;
      ds.status = NodeStatus::Skipped;
      ds.skip_reason = "upstream failure: " + node.id;
      queue.insert(queue.end(), run->succs[d].begin(), run->succs[d].end());
    }
  }
  persist(*run);
}

void Executor::persist(const Run &run) const {
  try {
    atomic_write(run.dir / "record.json", to_bytes(run.record.to_json().dump(2)));
  } catch (const Error &) {
    // The in-memory record stays authoritative; a later transition retries.
  }
}

std::shared_ptr<Executor::Run> Executor::find_run(const std::string &run_id) const {
  std::lock_guard lock(runs_mutex_);
  auto it = runs_.find(run_id);
  return it == runs_.end() ? nullptr : it->second;
}

RunRecord Executor::run_status(const std::string &run_id) const {
  if (auto run = find_run(run_id)) {
    std::lock_guard lock(run->mutex);
    return run->record;
  }
  const auto path = runs_root_ / run_id / "record.json";
  std::error_code ec;
  if (run_id.find('/') != std::string::npos || run_id.find("..") != std::string::npos ||
      !fs::is_regular_file(path, ec))
    throw Error(ErrorCode::UnknownRun, "unknown run '" + run_id + "'");
  const auto doc = json::parse(to_string(read_file(path)), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::UnknownRun, "run record unreadable: " + run_id);
  return RunRecord::from_json(doc);
}

RunRecord Executor::wait(const std::string &run_id) const {
  auto run = find_run(run_id);
  if (!run) return run_status(run_id);
  std::unique_lock lock(run->mutex);
  run->cv.wait(lock, [&] { return run->record.terminal(); });
  return run->record;
}

RunRecord Executor::cancel_run(const std::string &run_id) {
  auto run = find_run(run_id);
  if (!run) {
    const auto record = run_status(run_id); // throws UnknownRun
    throw Error(ErrorCode::AlreadyTerminal, "run '" + run_id + "' is already " +
                                                std::string(to_string(record.status)));
  }
  std::unique_lock lock(run->mutex);
  if (run->record.terminal() || run->cancel_requested)
    throw Error(ErrorCode::AlreadyTerminal, "run '" + run_id + "' is already " +
                                                (run->cancel_requested ? std::string("cancelled")
                                                                       : std::string(to_string(run->record.status))));
  run->cancel_requested = true;
  run->cv.notify_all();
  run->cv.wait(lock, [&] { return run->record.terminal(); });
  return run->record;
}

std::vector<RunEvent> Executor::events(const std::string &run_id, std::size_t from,
                                       std::chrono::milliseconds timeout, bool *finished) const {
  auto run = find_run(run_id);
  if (!run) {
    run_status(run_id); // UnknownRun, or a finished run from an earlier process
    if (finished) *finished = true;
    return {};
  }
  std::unique_lock lock(run->mutex);
  run->cv.wait_for(lock, timeout, [&] { return run->events.size() > from || run->record.terminal(); });
  std::vector<RunEvent> out;
  for (std::size_t i = from; i < run->events.size(); ++i) out.push_back(run->events[i]);
  if (finished) *finished = run->record.terminal() && from + out.size() >= run->events.size();
  return out;
}

} // namespace kolflow
