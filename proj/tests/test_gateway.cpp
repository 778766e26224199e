#include "test_support.hpp"

#include "kolflow/cli.hpp"
#include "kolflow/codec.hpp"
#include "kolflow/gateway.hpp"
#include "kolflow/remote.hpp"

#include <httplib.h>

#include <fstream>
#include <sstream>
#include <thread>

using namespace kolflow;
using kolflow::testing::error_of;
using nlohmann::json;

namespace {

const std::filesystem::path kCliData = std::filesystem::path(KOLFLOW_TEST_DATA) / "cli";
const std::filesystem::path kGolden = std::filesystem::path(KOLFLOW_SOURCE_DIR) / "tests" / "golden";

std::shared_ptr<const AlgorithmCatalog> shared_catalog() {
  static const auto catalog = std::make_shared<const AlgorithmCatalog>(AlgorithmCatalog::with_builtins());
  return catalog;
}

std::string slurp(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == ' ')) s.pop_back();
  return s;
}

/// Gateway on a free loopback port over a fresh store.
struct Server {
  kolflow::testing::TempDir dir{"kolflow-gw"};
  Engine engine;
  Gateway gateway;
  httplib::Client client;

  explicit Server(bool with_mocks = true)
      : engine(EngineConfig{dir.path(), std::nullopt, std::nullopt, with_mocks}, shared_catalog()),
        gateway(engine, GatewayOptions{1, std::chrono::milliseconds(50)}),
        client("127.0.0.1", gateway.start("127.0.0.1", 0)) {
    client.set_read_timeout(20, 0);
  }

  json get(const std::string &path, int expect_status) {
    auto res = client.Get(path);
    REQUIRE(res);
    CHECK(res->status == expect_status);
    return json::parse(res->body);
  }

  json post(const std::string &path, const json &body, int expect_status) {
    auto res = client.Post(path, body.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == expect_status);
    return json::parse(res->body);
  }

  std::string upload(const std::string &type, const std::filesystem::path &file) {
    const auto bytes = slurp(file);
    const auto doc = post("/artifacts",
                          {{"type", type},
                           {"payload_b64", base64_encode(std::span(reinterpret_cast<const std::uint8_t *>(bytes.data()),
                                                                   bytes.size()))}},
                          201);
    return doc.at("ref");
  }

  json four_query() {
    return {{"capabilities", {"tryon", "makeup", "background", "object_interaction"}},
            {"inputs",
             {{"identity", upload("person_image", kCliData / "identity.png")},
              {"garment", upload("garment_ref", kCliData / "garment.png")},
              {"makeup_ref", upload("makeup_ref", kCliData / "makeup.png")},
              {"background_spec", upload("background_spec", kCliData / "beach.txt")},
              {"object_ref", upload("object_ref", kCliData / "object.png")}}}};
  }

  json wait_terminal(const std::string &run_id) {
    for (int i = 0; i < 2000; ++i) {
      auto doc = get("/runs/" + run_id, 200);
      if (doc.at("status") != "running") return doc;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    FAIL("run did not finish");
    return {};
  }

  /// Registers a remote copy of `base` behind `url` through the API.
  void register_remote(const std::string &id, const std::string &base, const std::string &url) {
    ServiceDescriptor d;
    for (const auto &b : builtin_services())
      if (b.service_id == base) d = b;
    d.service_id = id;
    d.backend.target = RemoteBinding{url, 5000};
    post("/services", to_json(d), 201);
  }
};

struct Frame {
  std::size_t id;
  std::string event;
  json data;
};

std::vector<Frame> parse_sse(const std::string &body) {
  std::vector<Frame> frames;
  std::size_t pos = 0;
  while (true) {
    const auto end = body.find("\n\n", pos);
    if (end == std::string::npos) break;
    std::istringstream block(body.substr(pos, end - pos));
    Frame f{};
    for (std::string line; std::getline(block, line);) {
      if (line.rfind("id: ", 0) == 0) f.id = std::stoul(line.substr(4));
      if (line.rfind("event: ", 0) == 0) f.event = line.substr(7);
      if (line.rfind("data: ", 0) == 0) f.data = json::parse(line.substr(6));
    }
    frames.push_back(std::move(f));
    pos = end + 2;
  }
  return frames;
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(const std::vector<std::string> &args) {
  std::ostringstream out, err;
  const int code = cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> cli_input_args() {
  return {"--input", "identity=" + (kCliData / "identity.png").string(),
          "--input", "garment=" + (kCliData / "garment.png").string(),
          "--input", "makeup_ref=" + (kCliData / "makeup.png").string(),
          "--input", "background_spec=" + (kCliData / "beach.txt").string(),
          "--input", "object_ref=" + (kCliData / "object.png").string()};
}

std::string unreachable_url() {
  StubServer gone(shared_catalog(), "mock_makeup");
  const int port = gone.start();
  gone.stop();
  return "http://127.0.0.1:" + std::to_string(port);
}

} // namespace

TEST_SUITE("gateway") {
  TEST_CASE("service listing with and without the built-ins") {
    Server empty(false);
    CHECK(empty.get("/services", 200) == json::array());

    Server full;
    const auto listed = full.get("/services", 200);
    CHECK(listed.size() == 6);
    CHECK(full.get("/services?capability=makeup", 200).size() == 1);
    CHECK(full.get("/services?capability=hair", 400).at("code") == "UNKNOWN_CAPABILITY");
  }

  TEST_CASE("bind failures") {
    Server first;
    const auto port = std::stoi(first.gateway.base_url().substr(first.gateway.base_url().rfind(':') + 1));
    Gateway second(first.engine);
    CHECK(error_of([&] { second.start("127.0.0.1", port); }) == ErrorCode::BindFailure);
    CHECK(parse_bind_address("0.0.0.0:9001") == std::pair<std::string, int>{"0.0.0.0", 9001});
    CHECK(parse_bind_address("8123") == std::pair<std::string, int>{"127.0.0.1", 8123});
    CHECK(error_of([] { parse_bind_address("host:notaport"); }) == ErrorCode::BadConfig);
    CHECK(error_of([] { parse_bind_address("host:70000"); }) == ErrorCode::BadConfig);
  }

  TEST_CASE("synthesize is byte-stable and maps errors to statuses") {
    Server s;
    const auto query = s.four_query();
    auto a = s.client.Post("/pipelines/synthesize", query.dump(), "application/json");
    auto b = s.client.Post("/pipelines/synthesize", query.dump(), "application/json");
    REQUIRE(a);
    REQUIRE(b);
    CHECK(a->status == 200);
    CHECK(a->body == b->body);
    const auto doc = json::parse(a->body);
    CHECK(doc.at("nodes").size() == 4);
    CHECK(doc.contains("spec_hash"));
    CHECK(doc == json::parse(slurp(kGolden / "synthesize_four.json")));

    auto bad = s.client.Post("/pipelines/synthesize", "{not json", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    CHECK(json::parse(bad->body).at("code") == "BAD_QUERY");

    CHECK(s.get("/services", 200).size() == 6);
    auto del = s.client.Delete("/services/mock_makeup");
    REQUIRE(del);
    CHECK(del->status == 200);
    CHECK(s.post("/pipelines/synthesize", query, 422).at("code") == "UNSATISFIABLE_QUERY");
    auto again = s.client.Delete("/services/mock_makeup");
    REQUIRE(again);
    CHECK(again->status == 404);
  }

  TEST_CASE("validate reports violations without failing the request") {
    Server s;
    const json cyclic = {{"nodes", {{{"id", "a"}, {"service", "mock_makeup"}}, {{"id", "b"}, {"service", "mock_makeup"}}}},
                         {"edges",
                          {{{"from", "a"}, {"from_port", "out"}, {"to", "b"}, {"to_port", "person"}},
                           {{"from", "b"}, {"from_port", "out"}, {"to", "a"}, {"to_port", "person"}}}}};
    const auto verdict = s.post("/pipelines/validate", cyclic, 200);
    CHECK(verdict.at("valid") == false);
    std::set<std::string> codes;
    for (const auto &v : verdict.at("violations")) codes.insert(v.at("code"));
    CHECK(codes.count("CYCLE_DETECTED") == 1);
    CHECK(s.post("/pipelines/validate", json::array(), 400).at("code") == "BAD_REQUEST");
  }

  TEST_CASE("runs stream events in order and serve artifacts") {
    Server s;
    const auto spec = s.post("/pipelines/synthesize", s.four_query(), 200);
    const auto started = s.post("/runs", {{"pipeline", spec}, {"max_parallel", 1}}, 202);
    const std::string run_id = started.at("run_id");
    CHECK(started.at("spec_hash") == spec.at("spec_hash"));

    std::string body;
    auto res = s.client.Get("/runs/" + run_id + "/events", [&](const char *data, std::size_t len) {
      body.append(data, len);
      return true;
    });
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Content-Type") == "text/event-stream");
    const auto frames = parse_sse(body);
    std::vector<std::string> seen;
    for (const auto &f : frames) seen.push_back(f.event + (f.data.value("node", "").empty() ? "" : ":" + f.data.value("node", "")));
    CHECK(seen == std::vector<std::string>{"run_started", "node_started:tryon", "node_finished:tryon",
                                           "node_started:makeup", "node_finished:makeup",
                                           "node_started:background", "node_finished:background",
                                           "node_started:object_interaction",
                                           "node_finished:object_interaction", "run_finished"});
    for (std::size_t i = 0; i < frames.size(); ++i) CHECK(frames[i].id == i);

    std::string tail;
    auto resumed = s.client.Get("/runs/" + run_id + "/events?from=8", [&](const char *data, std::size_t len) {
      tail.append(data, len);
      return true;
    });
    REQUIRE(resumed);
    CHECK(parse_sse(tail).size() == 2);

    const auto record = s.wait_terminal(run_id);
    CHECK(record.at("status") == "succeeded");
    auto art = s.client.Get("/runs/" + run_id + "/artifacts/makeup/out");
    REQUIRE(art);
    CHECK(art->status == 200);
    CHECK(art->get_header_value("Content-Type") == "image/png");
    const auto ref = ArtifactRef::parse(art->get_header_value("X-Artifact-Ref"));
    const auto img = decode_png(std::span(reinterpret_cast<const std::uint8_t *>(art->body.data()), art->body.size()));
    CHECK(Artifact::from_raster(ArtifactType::PersonImage, img).ref() == ref);
    CHECK(img.pixel(0, 0)[0] == 90);

    CHECK(s.get("/runs/" + run_id + "/artifacts/makeup/nope", 404).at("code") == "UNKNOWN_ARTIFACT");
    CHECK(s.get("/runs/run-nope", 404).at("code") == "UNKNOWN_RUN");
    CHECK(s.get("/runs/run-nope/events", 404).at("code") == "UNKNOWN_RUN");
    CHECK(s.post("/runs/" + run_id + "/cancel", json::object(), 409).at("code") == "ALREADY_TERMINAL");
  }

  TEST_CASE("inline inputs and validation failures on run submission") {
    Server s;
    auto b64 = [](const std::filesystem::path &p) {
      const auto bytes = slurp(p);
      return base64_encode(std::span(reinterpret_cast<const std::uint8_t *>(bytes.data()), bytes.size()));
    };
    const json pipeline = {{"nodes", {{{"id", "m"}, {"service", "mock_makeup"}}}}};
    const auto started = s.post("/runs",
                                {{"pipeline", pipeline},
                                 {"inline_inputs",
                                  {{"m.person", {{"type", "person_image"}, {"payload_b64", b64(kCliData / "identity.png")}}},
                                   {"m.makeup_ref", {{"type", "makeup_ref"}, {"payload_b64", b64(kCliData / "makeup.png")}}}}}},
                                202);
    CHECK(s.wait_terminal(started.at("run_id")).at("status") == "succeeded");

    const auto refused = s.post("/runs", {{"pipeline", pipeline}}, 422);
    CHECK(refused.at("code") == "VALIDATION_FAILED");
    CHECK(refused.at("details").at("violations")[0].at("code") == "UNBOUND_PORT");
    CHECK(s.post("/runs", json::object(), 400).at("code") == "BAD_REQUEST");
    CHECK(s.post("/runs", {{"pipeline", pipeline}, {"max_parallel", 0}}, 400).at("code") == "BAD_REQUEST");
  }

  TEST_CASE("artifacts of failed nodes are not served") {
    Server s;
    s.engine.registry().register_service([] {
      ServiceDescriptor d;
      for (const auto &b : builtin_services())
        if (b.service_id == "mock_makeup") d = b;
      d.service_id = "dead_makeup";
      d.backend.target = RemoteBinding{unreachable_url(), 1000};
      return d;
    }());
    auto query = s.four_query();
    query["services"] = {{"makeup", "dead_makeup"}};
    const auto spec = s.post("/pipelines/synthesize", query, 200);
    const std::string run_id = s.post("/runs", {{"pipeline", spec}}, 202).at("run_id");
    const auto record = s.wait_terminal(run_id);
    CHECK(record.at("status") == "failed");
    CHECK(s.get("/runs/" + run_id + "/artifacts/makeup/out", 404).at("code") == "UNKNOWN_ARTIFACT");
    CHECK(s.get("/runs/" + run_id + "/artifacts/background/out", 404).at("code") == "UNKNOWN_ARTIFACT");
    auto ok = s.client.Get("/runs/" + run_id + "/artifacts/tryon/out");
    REQUIRE(ok);
    CHECK(ok->status == 200);
  }

  TEST_CASE("intermediates are fetchable while a later node runs, and runs can be cancelled") {
    Server s;
    StubOptions slow;
    slow.delay_ms = 1000;
    StubServer stub(shared_catalog(), "mock_background", slow);
    stub.start();
    s.register_remote("slow_background", "mock_background", stub.base_url());
    auto query = s.four_query();
    query["services"] = {{"background", "slow_background"}};
    const auto spec = s.post("/pipelines/synthesize", query, 200);

    const std::string run_id = s.post("/runs", {{"pipeline", spec}}, 202).at("run_id");
    for (int i = 0; i < 2000; ++i) {
      if (s.get("/runs/" + run_id, 200).at("nodes").at("background").at("status") == "running") break;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    auto art = s.client.Get("/runs/" + run_id + "/artifacts/tryon/out");
    REQUIRE(art);
    CHECK(art->status == 200);
    CHECK(art->get_header_value("Content-Type") == "image/png");
    CHECK(s.get("/runs/" + run_id, 200).at("status") == "running");

    const auto cancelled = s.post("/runs/" + run_id + "/cancel", json::object(), 200);
    CHECK(cancelled.at("status") == "cancelled");
    CHECK(cancelled.at("nodes").at("object_interaction").at("status") == "skipped");

    auto del = s.client.Delete("/services/slow_background");
    REQUIRE(del);
    CHECK(del->status == 200);
  }

  TEST_CASE("registering a remote service checks the advertised signature") {
    Server s;
    StubServer stub(shared_catalog(), "mock_makeup");
    stub.start();
    ServiceDescriptor d;
    for (const auto &b : builtin_services())
      if (b.service_id == "mock_tryon") d = b;
    d.service_id = "liar";
    d.backend.target = RemoteBinding{stub.base_url(), 1000};
    CHECK(s.post("/services", to_json(d), 422).at("code") == "SIGNATURE_MISMATCH");
    CHECK(s.post("/services", json{{"service_id", 3}}, 400).at("code") == "INVALID_DESCRIPTOR");
    CHECK(s.post("/services", to_json(builtin_services()[0]), 409).at("code") == "DUPLICATE_SERVICE_ID");
  }
}

TEST_SUITE("cli") {
  TEST_CASE("validate reports a cycle with exit 1") {
    kolflow::testing::TempDir dir;
    const auto file = dir / "bad_pipeline.json";
    std::ofstream(file) << R"({"nodes":[{"id":"a","service":"mock_makeup"},{"id":"b","service":"mock_makeup"}],
      "edges":[{"from":"a","from_port":"out","to":"b","to_port":"person"},
               {"from":"b","from_port":"out","to":"a","to_port":"person"}]})";
    const auto r = cli({"--store", (dir / "store").string(), "--with-mocks", "validate", "-f",
                        file.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("CYCLE_DETECTED") != std::string::npos);

    const auto json_mode = cli({"--store", (dir / "store").string(), "--with-mocks", "--output",
                                "json", "validate", "-f", file.string()});
    CHECK(json_mode.code == 1);
    CHECK(json::parse(json_mode.out).at("code") == "VALIDATION_FAILED");
  }

  TEST_CASE("usage errors exit 2") {
    CHECK(cli({"--no-such-flag", "list-services"}).code == 2);
    CHECK(cli({}).code == 2);
    CHECK(cli({"--output", "yaml", "list-services"}).code == 2);
    CHECK(cli({"--help"}).code == 0);
  }

  TEST_CASE("synthesize output matches the golden file and the HTTP response") {
    kolflow::testing::TempDir dir;
    std::vector<std::string> args{"--store", (dir / "store").string(), "--with-mocks", "--output",
                                  "json", "synthesize", "--caps", "tryon,makeup,background,object_interaction"};
    for (const auto &a : cli_input_args()) args.push_back(a);
    const auto r = cli(args);
    REQUIRE(r.code == 0);
    CHECK(trim(r.out) == trim(slurp(kGolden / "synthesize_four.json")));

    const auto doc = json::parse(r.out);
    const auto expected = json::parse(slurp(kCliData / "expected_refs.json"));
    CHECK(doc.at("inputs").at("tryon.person") == expected.at("identity"));
    CHECK(doc.at("inputs").at("tryon.garment") == expected.at("garment"));
    CHECK(doc.at("inputs").at("makeup.makeup_ref") == expected.at("makeup_ref"));
    CHECK(doc.at("inputs").at("background.background_spec") == expected.at("background_spec"));
    CHECK(doc.at("inputs").at("object_interaction.object_ref") == expected.at("object_ref"));

    Server s;
    auto res = s.client.Post("/pipelines/synthesize", s.four_query().dump(), "application/json");
    REQUIRE(res);
    CHECK(res->body == trim(r.out));
  }

  TEST_CASE("run, status and list-services through the CLI") {
    kolflow::testing::TempDir dir;
    const std::string store = (dir / "store").string();
    std::vector<std::string> synth{"--store", store, "--with-mocks", "--output", "json", "synthesize",
                                   "--caps", "tryon,makeup,background,object_interaction"};
    for (const auto &a : cli_input_args()) synth.push_back(a);
    const auto spec = cli(synth);
    REQUIRE(spec.code == 0);
    std::ofstream(dir / "spec.json") << spec.out;

    const auto run = cli({"--store", store, "--with-mocks", "--output", "json", "run", "-f",
                          (dir / "spec.json").string()});
    REQUIRE(run.code == 0);
    const auto record = json::parse(run.out);
    CHECK(record.at("status") == "succeeded");

    const auto status = cli({"--store", store, "--output", "json", "status", record.at("run_id")});
    CHECK(status.code == 0);
    CHECK(json::parse(status.out).at("nodes") == record.at("nodes"));
    CHECK(cli({"--store", store, "status", "run-nope"}).err.find("UNKNOWN_RUN") != std::string::npos);

    const auto listed = cli({"--store", store, "--with-mocks", "--output", "json", "list-services"});
    CHECK(listed.code == 0);
    CHECK(json::parse(listed.out).size() == 6);
  }
}
