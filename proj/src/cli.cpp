#include "kolflow/cli.hpp"

#include "kolflow/engine.hpp"
#include "kolflow/gateway.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <pthread.h>

namespace kolflow {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::string store = "kolflow-store";
  std::string registry;
  bool with_mocks = false;
  std::string output = "text";
};

class Session {
public:
  Session(const GlobalOptions &opts, std::ostream &out, std::ostream &err)
      : opts_(opts), out_(out), err_(err) {}

  bool json_mode() const { return opts_.output == "json"; }

  Engine &engine() {
    if (!engine_) {
      EngineConfig config;
      config.store_root = opts_.store;
      if (!opts_.registry.empty()) config.registry_snapshot = fs::path(opts_.registry);
      config.with_mocks = opts_.with_mocks;
      engine_ = std::make_unique<Engine>(config);
    }
    return *engine_;
  }

  void emit(const json &doc, const std::string &text) {
    if (json_mode())
      out_ << doc.dump() << "\n";
    else if (!text.empty())
      out_ << text << (text.back() == '\n' ? "" : "\n");
  }

  int fail(const Error &e) {
    err_ << "error: " << api_code(e.code()) << ": " << e.what() << "\n";
    if (e.code() == ErrorCode::ValidationFailed && e.details().contains("violations"))
      for (const auto &v : e.details().at("violations"))
        err_ << "  " << v.value("code", "") << ": " << v.value("message", "") << "\n";
    if (json_mode()) out_ << e.to_json().dump() << "\n";
    return 1;
  }

  const GlobalOptions &opts() const { return opts_; }
  std::ostream &out() { return out_; }
  std::ostream &err() { return err_; }

private:
  GlobalOptions opts_;
  std::ostream &out_;
  std::ostream &err_;
  std::unique_ptr<Engine> engine_;
};

json read_json_file(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path.string());
  auto doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::BadRequest, path.string() + " is not valid JSON");
  return doc;
}

std::pair<std::string, std::string> split_assignment(const std::string &text, const char *what) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size())
    throw Error(ErrorCode::BadRequest, std::string(what) + " must look like key=value, got '" + text + "'");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

/// A ref string is used as-is; anything else is a file to import.
ArtifactRef ref_or_import(Engine &engine, const std::string &value, ArtifactType type) {
  try {
    const auto ref = ArtifactRef::parse(value);
    if (ref.type != type)
      throw Error(ErrorCode::TypeMismatch, "ref " + value + " is not a " + std::string(to_string(type)));
    return ref;
  } catch (const Error &e) {
    if (e.code() != ErrorCode::BadRequest) throw;
  }
  return engine.put(artifact_from_file(value, type));
}

std::string describe(const ServiceDescriptor &d) {
  std::string backend = d.backend.is_local() ? "local:" + d.backend.local().algorithm_id
                                             : "remote:" + d.backend.remote().base_url;
  return d.service_id + "\t" + std::string(to_string(d.capability)) + "\t" + backend;
}

std::string describe(const RunRecord &r) {
  std::string text = r.run_id + " " + std::string(to_string(r.status)) + "\n";
  for (const auto &id : r.node_order) {
    const auto &n = r.nodes.at(id);
    text += "  " + id + " " + std::string(to_string(n.status));
    if (n.error) text += " " + n.error->code + ": " + n.error->message;
    for (const auto &[port, ref] : n.outputs) text += "\n    " + port + " " + ref.str();
    text += "\n";
  }
  return text;
}

PipelineSpec load_pipeline(Engine &engine, const std::string &file,
                           const std::vector<std::string> &assignments) {
  auto spec = PipelineSpec::from_json(read_json_file(file));
  for (const auto &a : assignments) {
    auto [key, value] = split_assignment(a, "--input");
    spec.inputs[key] = value;
  }
  import_file_inputs(engine, spec, fs::path(file).parent_path());
  return spec;
}

int serve(Session &s, const std::string &bind, std::size_t max_parallel) {
  const auto [host, port] = parse_bind_address(bind);
  auto &engine = s.engine();

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Gateway gateway(engine, GatewayOptions{max_parallel});
  const int bound = gateway.start(host, port);
  s.err() << "kolflow gateway listening on http://" << host << ":" << bound << "\n" << std::flush;
  int sig = 0;
  sigwait(&signals, &sig);
  s.err() << "shutting down\n";
  gateway.stop();
  return 0;
}

} // namespace

int cli_main(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"kolflow: compose and run generative image pipelines"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions globals;
  if (const char *env = std::getenv("KOLFLOW_STORE")) globals.store = env;
  app.add_option("--store", globals.store, "artifact store root (env KOLFLOW_STORE)");
  app.add_option("--registry", globals.registry, "registry snapshot file (created on register)");
  app.add_flag("--with-mocks", globals.with_mocks, "register the built-in mock and alignment services");
  app.add_option("--output", globals.output, "output format")->check(CLI::IsMember({"text", "json"}));

  std::string bind = "127.0.0.1:8080";
  if (const char *env = std::getenv("KOLFLOW_BIND")) bind = env;
  std::size_t max_parallel = 1;
  auto *serve_cmd = app.add_subcommand("serve", "run the HTTP gateway");
  serve_cmd->add_option("--bind", bind, "host:port (env KOLFLOW_BIND)");
  serve_cmd->add_option("--max-parallel", max_parallel)->check(CLI::PositiveNumber);

  std::string capability_filter;
  auto *list_cmd = app.add_subcommand("list-services", "list registered services");
  list_cmd->add_option("--capability", capability_filter);

  std::string descriptor_file;
  auto *register_cmd = app.add_subcommand("register", "register a service descriptor");
  register_cmd->add_option("-f,--file", descriptor_file, "descriptor JSON")->required();

  std::vector<std::string> caps, synth_inputs, synth_services;
  bool align_faces = false;
  auto *synth_cmd = app.add_subcommand("synthesize", "build a pipeline from capabilities");
  synth_cmd->add_option("--caps", caps, "capabilities")->delimiter(',')->required();
  synth_cmd->add_option("--input", synth_inputs, "role=path-or-ref");
  synth_cmd->add_option("--service", synth_services, "capability=service_id");
  synth_cmd->add_flag("--align-faces", align_faces);

  std::string pipeline_file;
  auto *validate_cmd = app.add_subcommand("validate", "check a pipeline document");
  validate_cmd->add_option("-f,--file", pipeline_file, "pipeline JSON")->required();

  std::vector<std::string> run_inputs;
  RunOptions run_options;
  auto *run_cmd = app.add_subcommand("run", "execute a pipeline to completion");
  run_cmd->add_option("-f,--file", pipeline_file, "pipeline JSON")->required();
  run_cmd->add_option("--input", run_inputs, "node.port=path-or-ref");
  run_cmd->add_option("--max-parallel", run_options.max_parallel)->check(CLI::PositiveNumber);
  run_cmd->add_flag("--fail-fast", run_options.fail_fast);
  run_cmd->add_flag("--memoize", run_options.memoize);

  std::string run_id;
  auto *status_cmd = app.add_subcommand("status", "show a run record");
  status_cmd->add_option("run_id", run_id)->required();

  std::vector<std::string> argv_strings(args.rbegin(), args.rend());
  try {
    app.parse(argv_strings);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError &e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  Session s(globals, out, err);
  try {
    if (serve_cmd->parsed()) return serve(s, bind, max_parallel);

    auto &engine = s.engine();
    if (list_cmd->parsed()) {
      std::optional<Capability> filter;
      if (!capability_filter.empty()) filter = capability_or_throw(capability_filter);
      json doc = json::array();
      std::string text;
      for (const auto &d : engine.registry().list_services(filter)) {
        doc.push_back(to_json(d));
        text += describe(d) + "\n";
      }
      s.emit(doc, text);
    } else if (register_cmd->parsed()) {
      const auto descriptor = descriptor_from_json(read_json_file(descriptor_file));
      engine.register_service(descriptor);
      if (!globals.registry.empty()) engine.save_snapshot(globals.registry);
      s.emit(to_json(descriptor), "registered " + descriptor.service_id);
    } else if (synth_cmd->parsed()) {
      CapabilityQuery query;
      for (const auto &c : caps) query.capabilities.insert(capability_or_throw(c));
      query.align_faces = align_faces;
      for (const auto &a : synth_inputs) {
        const auto [role, value] = split_assignment(a, "--input");
        const auto type = role_type(role);
        if (!type) throw Error(ErrorCode::BadQuery, "unknown input role '" + role + "'");
        query.provided_inputs[role] = ref_or_import(engine, value, *type);
      }
      for (const auto &a : synth_services) {
        const auto [cap, id] = split_assignment(a, "--service");
        query.services[capability_or_throw(cap)] = id;
      }
      const auto doc = engine.synthesize(query).to_document();
      s.emit(doc, doc.dump(2));
    } else if (validate_cmd->parsed()) {
      const auto spec = load_pipeline(engine, pipeline_file, {});
      const auto violations = engine.validate(spec);
      if (!violations.empty())
        return s.fail(Error(ErrorCode::ValidationFailed,
                            std::to_string(violations.size()) + " violation(s)",
                            json{{"violations", to_json(violations)}}));
      s.emit(json{{"valid", true}, {"violations", json::array()}, {"spec_hash", to_hex(spec.spec_hash())}},
             "valid " + to_hex(spec.spec_hash()));
    } else if (run_cmd->parsed()) {
      const auto spec = load_pipeline(engine, pipeline_file, run_inputs);
      const auto record = engine.executor().execute_run(spec, run_options);
      s.emit(record.to_json(), describe(record));
      if (record.status != RunStatus::Succeeded) {
        err << "error: RUN_" << (record.status == RunStatus::Cancelled ? "CANCELLED" : "FAILED");
        for (const auto &[id, n] : record.nodes)
          if (n.error) err << " " << id << "=" << n.error->code;
        err << "\n";
        return 1;
      }
    } else if (status_cmd->parsed()) {
      const auto record = engine.executor().run_status(run_id);
      s.emit(record.to_json(), describe(record));
    }
    return 0;
  } catch (const Error &e) {
    return s.fail(e);
  } catch (const std::exception &e) {
    return s.fail(Error(ErrorCode::IoFailure, e.what()));
  }
}

int cli_main(int argc, char **argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

} // namespace kolflow
