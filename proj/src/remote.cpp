#include "kolflow/remote.hpp"

#include <httplib.h>

#include <chrono>

namespace kolflow {

using nlohmann::json;

json encode_port_map(const PortMap &ports) {
  json out = json::object();
  for (const auto &[port, art] : ports)
    out[port] = {{"type", std::string(to_string(art.type()))},
                 {"payload_b64", base64_encode(art.payload())}};
  return out;
}

PortMap decode_port_map(const json &doc) {
  if (!doc.is_object()) throw Error(ErrorCode::ProtocolError, "port map must be an object");
  PortMap out;
  for (const auto &[port, entry] : doc.items()) {
    try {
      const auto type = parse_artifact_type(entry.at("type").get<std::string>());
      if (!type) throw Error(ErrorCode::ProtocolError, "port '" + port + "' has an unknown type");
      out.emplace(port, Artifact::decode(*type, base64_decode(entry.at("payload_b64").get<std::string>())));
    } catch (const json::exception &e) {
      throw Error(ErrorCode::ProtocolError, "malformed entry for port '" + port + "': " + e.what());
    } catch (const Error &e) {
      if (e.code() == ErrorCode::ProtocolError) throw;
      throw Error(ErrorCode::ProtocolError, "port '" + port + "' payload: " + e.what());
    }
  }
  return out;
}

namespace {

std::unique_ptr<httplib::Client> make_client(const RemoteBinding &binding) {
  auto client = std::make_unique<httplib::Client>(binding.base_url);
  if (!client->is_valid())
    throw Error(ErrorCode::BackendUnreachable, "invalid base_url '" + binding.base_url + "'");
  const auto ms = std::chrono::milliseconds(binding.timeout_ms);
  client->set_connection_timeout(ms);
  client->set_read_timeout(ms);
  client->set_write_timeout(ms);
  client->set_keep_alive(false);
  return client;
}

[[noreturn]] void transport_failure(const RemoteBinding &binding, httplib::Error err,
                                    std::chrono::steady_clock::duration elapsed) {
  const auto waited = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
  const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                         (err == httplib::Error::Read && waited + 50 >= binding.timeout_ms);
  if (timed_out)
    throw Error(ErrorCode::Timeout, binding.base_url + " did not answer within " +
                                        std::to_string(binding.timeout_ms) + " ms");
  throw Error(ErrorCode::BackendUnreachable,
              binding.base_url + " unreachable: " + httplib::to_string(err));
}

json parse_body(const httplib::Result &res, const std::string &what) {
  if (res->status != 200)
    throw Error(ErrorCode::ProtocolError, what + " returned HTTP " + std::to_string(res->status));
  auto doc = json::parse(res->body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object())
    throw Error(ErrorCode::ProtocolError, what + " returned a non-JSON body");
  return doc;
}

} // namespace

PortMap invoke_remote(const RemoteBinding &binding, Capability capability, const PortMap &inputs,
                      const json &params) {
  auto client = make_client(binding);
  const json body{{"capability", std::string(to_string(capability))},
                  {"params", params.is_null() ? json::object() : params},
                  {"inputs", encode_port_map(inputs)}};
  const auto start = std::chrono::steady_clock::now();
  auto res = client->Post("/v1/invoke", body.dump(), "application/json");
  if (!res) transport_failure(binding, res.error(), std::chrono::steady_clock::now() - start);
  const json doc = parse_body(res, "POST /v1/invoke");
  const auto status = doc.value("status", std::string());
  if (status == "error")
    throw Error(ErrorCode::RemoteFault,
                doc.value("code", std::string("UNKNOWN")) + ": " + doc.value("message", std::string()),
                json{{"remote_code", doc.value("code", std::string("UNKNOWN"))},
                     {"remote_message", doc.value("message", std::string())}});
  if (status != "ok" || !doc.contains("outputs"))
    throw Error(ErrorCode::ProtocolError, "invoke response lacks status ok / outputs");
  return decode_port_map(doc.at("outputs"));
}

AlgorithmDescriptor fetch_descriptor(const RemoteBinding &binding) {
  auto client = make_client(binding);
  const auto start = std::chrono::steady_clock::now();
  auto res = client->Get("/v1/descriptor");
  if (!res) transport_failure(binding, res.error(), std::chrono::steady_clock::now() - start);
  return AlgorithmDescriptor::from_json(parse_body(res, "GET /v1/descriptor"));
}

bool check_health(const RemoteBinding &binding) {
  try {
    auto client = make_client(binding);
    auto res = client->Get("/v1/health");
    if (!res || res->status != 200) return false;
    auto doc = json::parse(res->body, nullptr, false);
    return !doc.is_discarded() && doc.value("status", std::string()) == "ok";
  } catch (const Error &) {
    return false;
  }
}

void verify_remote_signature(const ServiceDescriptor &service, const AlgorithmDescriptor &advertised) {
  if (advertised.capability != service.capability)
    throw Error(ErrorCode::SignatureMismatch,
                "remote advertises capability " + std::string(to_string(advertised.capability)) +
                    ", service declares " + std::string(to_string(service.capability)));
  if (advertised.inputs != service.inputs || advertised.outputs != service.outputs)
    throw Error(ErrorCode::SignatureMismatch,
                "remote port signature differs from service '" + service.service_id + "'");
}

void exclusive_socket_options(int sock) {
  int yes = 1;
  setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
}

// ----------------------------------------------------------------- StubServer

StubServer::StubServer(std::shared_ptr<const AlgorithmCatalog> catalog, std::string algorithm_id,
                       StubOptions options)
    : catalog_(std::move(catalog)), algorithm_id_(std::move(algorithm_id)),
      options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  if (!catalog_->find(algorithm_id_))
    throw Error(ErrorCode::UnknownAlgorithm, "stub cannot wrap unknown algorithm '" + algorithm_id_ + "'");
  server_->set_socket_options(exclusive_socket_options);
  install_routes();
}

StubServer::~StubServer() { stop(); }

void StubServer::install_routes() {
  const auto reply = [](httplib::Response &res, const json &doc) {
    res.set_content(doc.dump(), "application/json");
  };

  server_->Get("/v1/health", [reply](const httplib::Request &, httplib::Response &res) {
    reply(res, {{"status", "ok"}});
  });

  server_->Get("/v1/descriptor", [this, reply](const httplib::Request &, httplib::Response &res) {
    json doc = catalog_->find(algorithm_id_)->descriptor.to_json();
    if (options_.fault == StubOptions::Fault::ZeroOutputs) doc["outputs"] = json::array();
    reply(res, doc);
  });

  server_->Post("/v1/invoke", [this, reply](const httplib::Request &req, httplib::Response &res) {
    ++invocations_;
    if (options_.delay_ms > 0) {
      std::unique_lock lock(stop_mutex_);
      stop_cv_.wait_for(lock, std::chrono::milliseconds(options_.delay_ms), [this] { return stopping_; });
    }
    switch (options_.fault) {
    case StubOptions::Fault::ErrorStatus:
      return reply(res, {{"status", "error"}, {"code", options_.error_code}, {"message", options_.error_message}});
    case StubOptions::Fault::Garbage:
      return res.set_content("<<not json>>", "text/plain");
    default:
      break;
    }
    try {
      const auto body = json::parse(req.body);
      const PortMap inputs = decode_port_map(body.at("inputs"));
      PortMap outputs = catalog_->invoke_local(algorithm_id_, inputs, body.value("params", json::object()));
      if (options_.fault == StubOptions::Fault::WrongOutputType) {
        PortMap relabeled;
        for (const auto &[port, art] : outputs)
          relabeled.emplace(port, Artifact::from_text(ArtifactType::BackgroundSpec, "not an image"));
        outputs = std::move(relabeled);
      }
      reply(res, {{"status", "ok"}, {"outputs", encode_port_map(outputs)}});
    } catch (const Error &e) {
      reply(res, {{"status", "error"}, {"code", std::string(api_code(e.code()))}, {"message", e.what()}});
    } catch (const std::exception &e) {
      reply(res, {{"status", "error"}, {"code", "BAD_REQUEST"}, {"message", e.what()}});
    }
  });
}

int StubServer::start(const std::string &host, int port) {
  host_ = host;
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) throw Error(ErrorCode::BindFailure, "stub server cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void StubServer::serve_forever(const std::string &host, int port) {
  host_ = host;
  if (!server_->bind_to_port(host, port))
    throw Error(ErrorCode::BindFailure, "stub server cannot bind " + host + ":" + std::to_string(port));
  port_ = port;
  server_->listen_after_bind();
}

void StubServer::stop() {
  {
    std::lock_guard lock(stop_mutex_);
    stopping_ = true;
  }
  stop_cv_.notify_all();
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string StubServer::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

} // namespace kolflow
