#include "kolflow/gateway.hpp"

#include "kolflow/remote.hpp"

#include <httplib.h>

#include <charconv>

namespace kolflow {

using nlohmann::json;

namespace {

void reply(httplib::Response &res, int status, const json &doc) {
  res.status = status;
  res.set_content(doc.dump(), "application/json");
}

void reply_error(httplib::Response &res, const Error &e) {
  reply(res, http_status(e.code()), e.to_json());
}

json parse_body(const httplib::Request &req, ErrorCode code) {
  auto doc = json::parse(req.body, nullptr, false);
  if (doc.is_discarded()) throw Error(code, "request body is not valid JSON");
  if (!doc.is_object()) throw Error(code, "request body must be a JSON object");
  return doc;
}

/// Wraps a handler so engine errors become ApiError documents.
template <class F> httplib::Server::Handler guarded(F handler) {
  return [handler](const httplib::Request &req, httplib::Response &res) {
    try {
      handler(req, res);
    } catch (const Error &e) {
      reply_error(res, e);
    } catch (const json::exception &e) {
      reply_error(res, Error(ErrorCode::BadRequest, e.what()));
    } catch (const std::exception &e) {
      reply(res, 500, {{"code", "INTERNAL"}, {"message", e.what()}});
    }
  };
}

Artifact artifact_from_upload(const json &entry) {
  if (!entry.is_object()) throw Error(ErrorCode::BadRequest, "upload must be {type, payload_b64}");
  const auto type = artifact_type_or_throw(entry.at("type").get<std::string>(), ErrorCode::BadRequest);
  return Artifact::decode(type, base64_decode(entry.at("payload_b64").get<std::string>()));
}

std::size_t positive_size(const json &doc, const char *key, std::size_t fallback) {
  if (!doc.contains(key)) return fallback;
  const auto &v = doc.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 1)
    throw Error(ErrorCode::BadRequest, std::string(key) + " must be a positive integer");
  return v.get<std::size_t>();
}

} // namespace

std::pair<std::string, int> parse_bind_address(const std::string &text) {
  std::string host = "127.0.0.1";
  std::string port_text = text;
  if (const auto colon = text.rfind(':'); colon != std::string::npos) {
    host = text.substr(0, colon);
    port_text = text.substr(colon + 1);
  }
  int port = -1;
  const auto [end, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (host.empty() || ec != std::errc() || end != port_text.data() + port_text.size() || port < 0 ||
      port > 65535)
    throw Error(ErrorCode::BadConfig, "bad bind address '" + text + "' (expected host:port)");
  return {host, port};
}

Gateway::Gateway(Engine &engine, GatewayOptions options)
    : engine_(engine), options_(options), server_(std::make_unique<httplib::Server>()) {
  server_->new_task_queue = [] { return new httplib::ThreadPool(16); };
  server_->set_socket_options(exclusive_socket_options);
  install_routes();
}

Gateway::~Gateway() { stop(); }

void Gateway::install_routes() {
  auto &srv = *server_;

  srv.Get("/services", guarded([this](const httplib::Request &req, httplib::Response &res) {
    std::optional<Capability> filter;
    if (req.has_param("capability")) filter = capability_or_throw(req.get_param_value("capability"));
    json out = json::array();
    for (const auto &d : engine_.registry().list_services(filter)) out.push_back(to_json(d));
    reply(res, 200, out);
  }));

  srv.Post("/services", guarded([this](const httplib::Request &req, httplib::Response &res) {
    const auto descriptor = descriptor_from_json(parse_body(req, ErrorCode::InvalidDescriptor));
    engine_.register_service(descriptor);
    reply(res, 201, to_json(descriptor));
  }));

  srv.Delete(R"(/services/([^/]+))", guarded([this](const httplib::Request &req, httplib::Response &res) {
    reply(res, 200, to_json(engine_.unregister_service(req.matches[1].str())));
  }));

  srv.Post("/pipelines/synthesize", guarded([this](const httplib::Request &req, httplib::Response &res) {
    const auto query = CapabilityQuery::from_json(parse_body(req, ErrorCode::BadQuery));
    reply(res, 200, engine_.synthesize(query).to_document());
  }));

  srv.Post("/pipelines/validate", guarded([this](const httplib::Request &req, httplib::Response &res) {
    const auto spec = PipelineSpec::from_json(parse_body(req, ErrorCode::BadRequest));
    const auto violations = engine_.validate(spec);
    reply(res, 200,
          {{"valid", violations.empty()},
           {"violations", to_json(violations)},
           {"spec_hash", to_hex(spec.spec_hash())}});
  }));

  srv.Post("/artifacts", guarded([this](const httplib::Request &req, httplib::Response &res) {
    const auto ref = engine_.put(artifact_from_upload(parse_body(req, ErrorCode::BadRequest)));
    reply(res, 201, {{"ref", ref.str()}});
  }));

  srv.Post("/runs", guarded([this](const httplib::Request &req, httplib::Response &res) {
    const auto body = parse_body(req, ErrorCode::BadRequest);
    if (!body.contains("pipeline")) throw Error(ErrorCode::BadRequest, "missing 'pipeline'");
    auto spec = PipelineSpec::from_json(body.at("pipeline"));
    if (body.contains("inline_inputs")) {
      const auto &inline_inputs = body.at("inline_inputs");
      if (!inline_inputs.is_object()) throw Error(ErrorCode::BadRequest, "'inline_inputs' must be an object");
      for (const auto &[key, entry] : inline_inputs.items())
        spec.inputs[key] = engine_.put(artifact_from_upload(entry)).str();
    }
    RunOptions options;
    options.max_parallel = positive_size(body, "max_parallel", options_.max_parallel);
    options.fail_fast = body.value("fail_fast", false);
    options.memoize = body.value("memoize", false);
    const auto run_id = engine_.executor().start_run(spec, options);
    reply(res, 202, {{"run_id", run_id}, {"spec_hash", to_hex(spec.spec_hash())}});
  }));

  srv.Get(R"(/runs/([^/]+))", guarded([this](const httplib::Request &req, httplib::Response &res) {
    reply(res, 200, engine_.executor().run_status(req.matches[1].str()).to_json());
  }));

  srv.Post(R"(/runs/([^/]+)/cancel)", guarded([this](const httplib::Request &req, httplib::Response &res) {
    reply(res, 200, engine_.executor().cancel_run(req.matches[1].str()).to_json());
  }));

  srv.Get(R"(/runs/([^/]+)/artifacts/([^/]+)/([^/]+))",
          guarded([this](const httplib::Request &req, httplib::Response &res) {
            const auto record = engine_.executor().run_status(req.matches[1].str());
            const auto node = req.matches[2].str();
            const auto port = req.matches[3].str();
            const auto it = record.nodes.find(node);
            if (it == record.nodes.end() || it->second.status != NodeStatus::Succeeded ||
                !it->second.outputs.contains(port))
              throw Error(ErrorCode::UnknownArtifact,
                          "no artifact for " + node + "." + port + " in run " + record.run_id);
            const auto &ref = it->second.outputs.at(port);
            const auto artifact = engine_.store().get(ref);
            const auto payload = artifact.payload();
            res.status = 200;
            res.set_header("X-Artifact-Ref", ref.str());
            res.set_content(std::string(payload.begin(), payload.end()),
                            std::string(content_type(ref.type)));
          }));

  srv.Get(R"(/runs/([^/]+)/events)", guarded([this](const httplib::Request &req, httplib::Response &res) {
    const auto run_id = req.matches[1].str();
    (void)engine_.executor().run_status(run_id); // UnknownRun before streaming starts
    auto next = std::make_shared<std::size_t>(0);
    if (req.has_param("from")) *next = std::stoul(req.get_param_value("from"));
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream", [this, run_id, next](std::size_t, httplib::DataSink &sink) {
          bool finished = false;
          const auto batch = engine_.executor().events(run_id, *next, options_.event_poll, &finished);
          for (const auto &ev : batch) {
            const std::string frame = "id: " + std::to_string(*next) + "\nevent: " + ev.kind +
                                      "\ndata: " + ev.to_json().dump() + "\n\n";
            if (!sink.write(frame.data(), frame.size())) return false;
            ++*next;
          }
          if (finished) sink.done();
          return true;
        });
  }));
}

int Gateway::start(const std::string &host, int port) {
  host_ = host;
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ <= 0)
    throw Error(ErrorCode::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void Gateway::serve(const std::string &host, int port) {
  host_ = host;
  if (!server_->bind_to_port(host, port))
    throw Error(ErrorCode::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
  port_ = port;
  server_->listen_after_bind();
}

void Gateway::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string Gateway::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

} // namespace kolflow
