#pragma once

#include "kolflow/backends.hpp"

#include <atomic>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace kolflow {

// Model-server wire protocol (all bodies JSON):
//   GET  /v1/descriptor -> AlgorithmDescriptor::to_json()
//   POST /v1/invoke     {capability, params, inputs: {port: {type, payload_b64}}}
//                       -> {status: "ok", outputs: {...}}
//                        | {status: "error", code, message}
//   GET  /v1/health     -> {status: "ok"}

nlohmann::json encode_port_map(const PortMap &ports);
/// Throws ProtocolError when entries are malformed or fail to decode.
PortMap decode_port_map(const nlohmann::json &doc);

/// Throws BackendUnreachable, Timeout, ProtocolError, RemoteFault.
PortMap invoke_remote(const RemoteBinding &binding, Capability capability,
                      const PortMap &inputs, const nlohmann::json &params);

/// Throws BackendUnreachable, Timeout, ProtocolError, SignatureMismatch.
AlgorithmDescriptor fetch_descriptor(const RemoteBinding &binding);

bool check_health(const RemoteBinding &binding);

/// Throws SignatureMismatch if the advertised ports or capability differ
/// from what `service` declares.
void verify_remote_signature(const ServiceDescriptor &service,
                             const AlgorithmDescriptor &advertised);

/// Fault injection knobs for the reference stub server.
struct StubOptions {
  enum class Fault { None, ErrorStatus, Garbage, ZeroOutputs, WrongOutputType };
  Fault fault = Fault::None;
  std::string error_code = "OOM";
  std::string error_message = "out of memory";
  /// Added latency before answering /v1/invoke.
  unsigned delay_ms = 0;
};

/// Reference model server wrapping one local algorithm behind the wire
/// protocol. Serves on a background thread until stop() or destruction.
class StubServer {
public:
  StubServer(std::shared_ptr<const AlgorithmCatalog> catalog, std::string algorithm_id,
             StubOptions options = {});
  ~StubServer();

  StubServer(const StubServer &) = delete;
  StubServer &operator=(const StubServer &) = delete;

  /// Binds (port 0 picks a free port) and starts serving. Returns the port.
  /// Throws BindFailure.
  int start(const std::string &host = "127.0.0.1", int port = 0);
  void stop();

  std::string base_url() const;
  int port() const noexcept { return port_; }
  std::size_t invocations() const noexcept { return invocations_.load(); }

  /// Blocks the calling thread serving requests (used by the stub tool).
  void serve_forever(const std::string &host, int port);

private:
  void install_routes();

  std::shared_ptr<const AlgorithmCatalog> catalog_;
  std::string algorithm_id_;
  StubOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
  std::atomic<std::size_t> invocations_{0};
  std::mutex stop_mutex_;
  std::condition_variable stop_cv_;
  bool stopping_ = false;
};

/// Listening-socket setup with SO_REUSEADDR only, so binding a port that
/// another process listens on fails instead of silently sharing it.
void exclusive_socket_options(int sock);

} // namespace kolflow
