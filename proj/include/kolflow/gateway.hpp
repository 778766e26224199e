#pragma once

#include "kolflow/engine.hpp"

#include <memory>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace kolflow {

struct GatewayOptions {
  /// Default for runs whose request carries no max_parallel.
  std::size_t max_parallel = 1;
  /// How long one event-stream poll blocks before re-checking the client.
  std::chrono::milliseconds event_poll{250};
};

/// HTTP surface over an Engine.
///
///   GET    /services                       list descriptors
///   POST   /services                       register (remote bindings are verified)
///   DELETE /services/{id}                  unregister
///   POST   /pipelines/synthesize           CapabilityQuery -> spec document
///   POST   /pipelines/validate             spec -> {valid, violations, spec_hash}
///   POST   /artifacts                      {type, payload_b64} -> {ref}
///   POST   /runs                           {pipeline, inline_inputs, max_parallel, fail_fast, memoize}
///   GET    /runs/{id}                      run record
///   GET    /runs/{id}/events               server-sent events
///   GET    /runs/{id}/artifacts/{node}/{port}
///   POST   /runs/{id}/cancel
///
/// Errors are {code, message, details?} with the status of the code.
class Gateway {
public:
  explicit Gateway(Engine &engine, GatewayOptions options = {});
  ~Gateway();

  Gateway(const Gateway &) = delete;
  Gateway &operator=(const Gateway &) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port. Throws BindFailure.
  int start(const std::string &host, int port);
  /// Binds and serves on the calling thread until stop().
  void serve(const std::string &host, int port);
  /// Stops accepting requests and waits for active runs to finish their
  /// bookkeeping.
  void stop();

  std::string base_url() const;

private:
  void install_routes();

  Engine &engine_;
  GatewayOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_;
  int port_ = -1;
};

/// Splits "host:port"; a bare port means 127.0.0.1. Throws BadConfig.
std::pair<std::string, int> parse_bind_address(const std::string &text);

} // namespace kolflow
