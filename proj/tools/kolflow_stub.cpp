#include "kolflow/gateway.hpp"
#include "kolflow/remote.hpp"

#include <CLI11.hpp>

#include <iostream>

/// Reference model server: exposes one built-in algorithm over the
/// /v1 wire protocol so it can be registered as a remote service.
int main(int argc, char **argv) {
  CLI::App app{"kolflow-stub: serve a built-in algorithm over HTTP"};
  std::string algorithm;
  std::string bind = "127.0.0.1:9000";
  unsigned delay_ms = 0;
  std::string fault = "none";
  app.add_option("algorithm", algorithm, "algorithm id, e.g. mock_tryon")->required();
  app.add_option("--bind", bind, "host:port");
  app.add_option("--delay-ms", delay_ms, "latency added to every invoke");
  app.add_option("--fault", fault, "fault injection")
      ->check(CLI::IsMember({"none", "error", "garbage", "zero-outputs", "wrong-type"}));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  kolflow::StubOptions options;
  options.delay_ms = delay_ms;
  if (fault == "error") options.fault = kolflow::StubOptions::Fault::ErrorStatus;
  if (fault == "garbage") options.fault = kolflow::StubOptions::Fault::Garbage;
  if (fault == "zero-outputs") options.fault = kolflow::StubOptions::Fault::ZeroOutputs;
  if (fault == "wrong-type") options.fault = kolflow::StubOptions::Fault::WrongOutputType;

  try {
    const auto [host, port] = kolflow::parse_bind_address(bind);
    auto catalog = std::make_shared<const kolflow::AlgorithmCatalog>(kolflow::AlgorithmCatalog::with_builtins());
    kolflow::StubServer server(catalog, algorithm, options);
    std::cerr << "serving " << algorithm << " on http://" << host << ":" << port << "\n";
    server.serve_forever(host, port);
  } catch (const kolflow::Error &e) {
    std::cerr << "error: " << kolflow::api_code(e.code()) << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
