#include "oracles.hpp"
#include "test_support.hpp"

#include "kolflow/flow.hpp"

#include <set>

using namespace kolflow;
using kolflow::testing::error_of;

namespace {

using Edges = std::vector<std::pair<std::string, std::string>>;

RegistryState paper_state() {
  RegistryState s;
  for (const auto &d : builtin_services()) s.services.emplace(d.service_id, d);
  return s;
}

const kolflow::testing::ChainInputs &chain() {
  static const kolflow::testing::ChainInputs inputs;
  return inputs;
}

CapabilityQuery full_query() {
  CapabilityQuery q;
  q.capabilities = {Capability::Tryon, Capability::Makeup, Capability::Background,
                    Capability::ObjectInteraction};
  q.provided_inputs = {{"identity", chain().identity.ref()},
                       {"garment", chain().garment.ref()},
                       {"makeup_ref", chain().makeup_ref.ref()},
                       {"background_spec", chain().background_spec.ref()},
                       {"object_ref", chain().object_ref.ref()}};
  return q;
}

std::vector<std::string> node_ids(const PipelineSpec &spec) {
  std::vector<std::string> ids;
  for (const auto &n : spec.nodes) ids.push_back(n.id);
  return ids;
}

std::set<std::string> codes(const std::vector<Violation> &violations) {
  std::set<std::string> out;
  for (const auto &v : violations) out.insert(v.code);
  return out;
}

bool has_edge(const PipelineSpec &spec, const PipelineEdge &e) {
  return std::find(spec.edges.begin(), spec.edges.end(), e) != spec.edges.end();
}

} // namespace

TEST_SUITE("topological_order") {
  TEST_CASE("chain, diamond and two-cycle") {
    CHECK(topological_order({"c", "b", "a"}, {{"a", "b"}, {"b", "c"}}) ==
          std::vector<std::string>{"a", "b", "c"});
    CHECK(topological_order({"d", "c", "b", "a"}, {{"a", "b"}, {"a", "c"}, {"b", "d"}, {"c", "d"}}) ==
          std::vector<std::string>{"a", "b", "c", "d"});
    try {
      topological_order({"a", "b"}, {{"a", "b"}, {"b", "a"}});
      FAIL("expected CycleDetected");
    } catch (const Error &e) {
      CHECK(e.code() == ErrorCode::CycleDetected);
      CHECK(e.details().at("cycle") == nlohmann::json{"a", "b"});
    }
  }

  TEST_CASE("diamond answer is the least of the brute-force orders") {
    const Edges edges{{"a", "b"}, {"a", "c"}, {"b", "d"}, {"c", "d"}};
    const auto all = oracle::all_valid_orders({"a", "b", "c", "d"}, edges);
    CHECK(all.size() == 2);
    CHECK(topological_order({"a", "b", "c", "d"}, edges) == all.front());
  }

  TEST_CASE("random DAGs agree with exhaustive enumeration") {
    std::mt19937_64 rng(20240611);
    for (int trial = 0; trial < 300; ++trial) {
      const auto g = oracle::random_dag(rng, 7);
      const auto got = topological_order(g.nodes, g.edges);
      const auto all = oracle::all_valid_orders(g.nodes, g.edges);
      REQUIRE_FALSE(all.empty());
      CHECK(oracle::respects(got, g.edges));
      CHECK(got == all.front());
    }
  }

  TEST_CASE("reported cycles are real cycles") {
    std::mt19937_64 rng(99);
    int cyclic = 0;
    for (int trial = 0; trial < 300; ++trial) {
      auto g = oracle::random_dag(rng, 6);
      if (g.nodes.size() < 2) continue;
      // Add a few random back edges.
      std::uniform_int_distribution<std::size_t> pick(0, g.nodes.size() - 1);
      for (int k = 0; k < 2; ++k) {
        const auto a = g.nodes[pick(rng)], b = g.nodes[pick(rng)];
        if (a != b) g.edges.emplace_back(a, b);
      }
      const bool expect_cycle = oracle::has_cycle(g.nodes, g.edges);
      if (!expect_cycle) {
        CHECK(oracle::respects(topological_order(g.nodes, g.edges), g.edges));
        continue;
      }
      ++cyclic;
      try {
        topological_order(g.nodes, g.edges);
        FAIL("cycle not detected");
      } catch (const Error &e) {
        REQUIRE(e.code() == ErrorCode::CycleDetected);
        const auto cycle = e.details().at("cycle").get<std::vector<std::string>>();
        REQUIRE(cycle.size() >= 2);
        for (std::size_t i = 0; i < cycle.size(); ++i) {
          const Edges::value_type step{cycle[i], cycle[(i + 1) % cycle.size()]};
          CHECK(std::find(g.edges.begin(), g.edges.end(), step) != g.edges.end());
        }
      }
    }
    CHECK(cyclic > 20);
  }
}

TEST_SUITE("bind_io") {
  TEST_CASE("intermediates take precedence over the external identity") {
    const auto state = paper_state();
    const std::vector<PipelineNode> nodes{{"t", "mock_tryon"}, {"m", "mock_makeup"}};
    const auto q = full_query();
    const auto b = bind_io(nodes, state, q.provided_inputs);
    REQUIRE(b.edges.size() == 1);
    CHECK(b.edges[0] == PipelineEdge{"t", "out", "m", "person"});
    CHECK(b.source_bindings.at("t.person") == chain().identity.ref().str());
    CHECK(b.source_bindings.at("m.makeup_ref") == chain().makeup_ref.ref().str());
    CHECK_FALSE(b.source_bindings.contains("m.person"));
  }

  TEST_CASE("a single node binds everything from provided inputs") {
    const auto state = paper_state();
    const auto q = full_query();
    const auto b = bind_io({{"bg", "mock_background"}}, state, q.provided_inputs);
    CHECK(b.edges.empty());
    CHECK(b.source_bindings.size() == 2);
  }

  TEST_CASE("missing reference is an unbound port") {
    auto q = full_query();
    q.provided_inputs.erase("makeup_ref");
    try {
      bind_io({{"t", "mock_tryon"}, {"m", "mock_makeup"}}, paper_state(), q.provided_inputs);
      FAIL("expected UnboundPort");
    } catch (const Error &e) {
      CHECK(e.code() == ErrorCode::UnboundPort);
      CHECK(e.details().at("node") == "m");
      CHECK(e.details().at("port") == "makeup_ref");
    }
  }

  TEST_CASE("two provided refs of one type are ambiguous") {
    std::map<std::string, ArtifactRef> provided{
        {"identity", chain().identity.ref()},
        {"extra", kolflow::testing::person(kolflow::testing::uniform(1, 1, 1, 1, 1)).ref()},
        {"makeup_ref", chain().makeup_ref.ref()}};
    CHECK(error_of([&] { bind_io({{"m", "mock_makeup"}}, paper_state(), provided); }) ==
          ErrorCode::AmbiguousExternalInput);
  }

  TEST_CASE("forbidden producers are skipped") {
    auto state = paper_state();
    state.rules.set(Capability::Makeup, Capability::Background, DependencyRule::Forbidden);
    const auto q = full_query();
    const auto b = bind_io({{"t", "mock_tryon"}, {"m", "mock_makeup"}, {"bg", "mock_background"}}, state,
                           q.provided_inputs);
    CHECK(std::find(b.edges.begin(), b.edges.end(), PipelineEdge{"t", "out", "bg", "person"}) != b.edges.end());
  }
}

TEST_SUITE("synthesize") {
  TEST_CASE("four capabilities form the paper chain") {
    const auto spec = synthesize_pipeline(full_query(), paper_state());
    CHECK(node_ids(spec) == std::vector<std::string>{"tryon", "makeup", "background", "object_interaction"});
    CHECK(spec.inputs.at("tryon.person") == chain().identity.ref().str());
    CHECK(has_edge(spec, {"tryon", "out", "makeup", "person"}));
    CHECK(has_edge(spec, {"makeup", "out", "background", "person"}));
    CHECK(has_edge(spec, {"background", "out", "object_interaction", "person"}));
    CHECK(validate_pipeline(spec, paper_state()).empty());
  }

  TEST_CASE("align_faces wraps makeup") {
    CapabilityQuery q;
    q.capabilities = {Capability::Makeup};
    q.align_faces = true;
    std::vector<Point2> pts;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) pts.push_back({double(i % 9), double(i / 9)});
    q.provided_inputs = {{"identity", chain().identity.ref()},
                         {"makeup_ref", chain().makeup_ref.ref()},
                         {"landmarks", Artifact::from_landmarks(LandmarkSet(pts)).ref()}};
    const auto spec = synthesize_pipeline(q, paper_state());
    CHECK(node_ids(spec) == std::vector<std::string>{"face_extract_align", "makeup", "face_reintegrate"});
    CHECK(has_edge(spec, {"face_extract_align", "face", "makeup", "person"}));
    CHECK(has_edge(spec, {"makeup", "out", "face_reintegrate", "face"}));
    CHECK(has_edge(spec, {"face_extract_align", "session", "face_reintegrate", "session"}));
  }

  TEST_CASE("missing garment is unsatisfiable") {
    CapabilityQuery q;
    q.capabilities = {Capability::Tryon};
    q.provided_inputs = {{"identity", chain().identity.ref()}};
    try {
      synthesize_pipeline(q, paper_state());
      FAIL("expected UnsatisfiableQuery");
    } catch (const Error &e) {
      CHECK(e.code() == ErrorCode::UnsatisfiableQuery);
      CHECK(e.details().at("missing") == "garment");
    }
  }

  TEST_CASE("unregistered capability is unsatisfiable") {
    auto state = paper_state();
    state.services.erase("mock_makeup");
    CHECK(error_of([&] { synthesize_pipeline(full_query(), state); }) == ErrorCode::UnsatisfiableQuery);
  }

  TEST_CASE("two services for one capability need an explicit choice") {
    auto state = paper_state();
    auto twin = state.services.at("mock_makeup");
    twin.service_id = "makeup_twin";
    state.services.emplace(twin.service_id, twin);
    CHECK(error_of([&] { synthesize_pipeline(full_query(), state); }) == ErrorCode::AmbiguousService);
    auto q = full_query();
    q.services[Capability::Makeup] = "makeup_twin";
    const auto spec = synthesize_pipeline(q, state);
    CHECK(spec.find_node("makeup")->service == "makeup_twin");
    q.services[Capability::Makeup] = "mock_tryon";
    CHECK(error_of([&] { synthesize_pipeline(q, state); }) == ErrorCode::UnsatisfiableQuery);
  }

  TEST_CASE("rules that admit no order are cyclic constraints") {
    auto state = paper_state();
    state.rules.set(Capability::ObjectInteraction, Capability::Tryon, DependencyRule::Before);
    CHECK(error_of([&] { synthesize_pipeline(full_query(), state); }) == ErrorCode::CyclicConstraints);
  }

  TEST_CASE("ordering holds when an intermediate capability is absent") {
    auto q = full_query();
    q.capabilities = {Capability::ObjectInteraction, Capability::Tryon};
    const auto spec = synthesize_pipeline(q, paper_state());
    CHECK(node_ids(spec) == std::vector<std::string>{"tryon", "object_interaction"});
  }

  TEST_CASE("output is deterministic and independent of map insertion history") {
    const auto a = synthesize_pipeline(full_query(), paper_state());
    RegistryState reversed;
    auto services = builtin_services();
    for (auto it = services.rbegin(); it != services.rend(); ++it) reversed.services.emplace(it->service_id, *it);
    const auto b = synthesize_pipeline(full_query(), reversed);
    CHECK(a.canonical() == b.canonical());
    CHECK(a.spec_hash() == b.spec_hash());
    CHECK(a.canonical().find(' ') == std::string::npos);
  }

  TEST_CASE("every capability subset synthesizes a valid pipeline") {
    const auto state = paper_state();
    const std::vector<Capability> four{Capability::Tryon, Capability::Makeup, Capability::Background,
                                       Capability::ObjectInteraction};
    for (unsigned mask = 1; mask < 16; ++mask) {
      auto q = full_query();
      q.capabilities.clear();
      for (unsigned bit = 0; bit < 4; ++bit)
        if (mask & (1u << bit)) q.capabilities.insert(four[bit]);
      CAPTURE(mask);
      const auto spec = synthesize_pipeline(q, state);
      CHECK(validate_pipeline(spec, state).empty());
      std::map<std::string, std::size_t> pos;
      for (std::size_t i = 0; i < spec.nodes.size(); ++i) pos[spec.nodes[i].id] = i;
      for (const auto &e : spec.edges) CHECK(pos[e.from] < pos[e.to]);
    }
  }
}

TEST_SUITE("query document") {
  TEST_CASE("round trip and malformed queries") {
    const auto q = full_query();
    const auto back = CapabilityQuery::from_json(q.to_json());
    CHECK(back.capabilities == q.capabilities);
    CHECK(back.provided_inputs == q.provided_inputs);
    CHECK(error_of([] { CapabilityQuery::from_json(nlohmann::json::array()); }) == ErrorCode::BadQuery);
    CHECK(error_of([] { CapabilityQuery::from_json({{"capabilities", {"hair"}}}); }) == ErrorCode::BadQuery);
    CHECK(error_of([] { CapabilityQuery::from_json({{"inputs", nlohmann::json::object()}}); }) ==
          ErrorCode::BadQuery);
    CHECK(error_of([] {
            CapabilityQuery::from_json({{"capabilities", {"tryon"}}, {"inputs", {{"identity", "junk"}}}});
          }) == ErrorCode::BadQuery);
  }
}

TEST_SUITE("validate_pipeline") {
  TEST_CASE("backwards edge against a before rule") {
    const auto state = paper_state();
    PipelineSpec spec;
    spec.nodes = {{"makeup", "mock_makeup"}, {"tryon", "mock_tryon"}};
    spec.edges = {{"makeup", "out", "tryon", "person"}};
    spec.inputs = {{"makeup.person", chain().identity.ref().str()},
                   {"makeup.makeup_ref", chain().makeup_ref.ref().str()},
                   {"tryon.garment", chain().garment.ref().str()}};
    const auto found = codes(validate_pipeline(spec, state));
    CHECK(found == std::set<std::string>{"ORDER_RULE_VIOLATED"});
  }

  TEST_CASE("unregistered service and empty pipeline") {
    const auto state = paper_state();
    PipelineSpec spec;
    spec.nodes = {{"x", "ghost_service"}};
    CHECK(codes(validate_pipeline(spec, state)) == std::set<std::string>{"UNKNOWN_SERVICE"});
    CHECK(codes(validate_pipeline(PipelineSpec{}, state)) == std::set<std::string>{"EMPTY_PIPELINE"});
  }

  TEST_CASE("all violations are reported together") {
    auto state = paper_state();
    state.rules.set(Capability::Tryon, Capability::Makeup, DependencyRule::Forbidden);
    PipelineSpec spec;
    spec.nodes = {{"t", "mock_tryon"}, {"m", "mock_makeup"}, {"m", "mock_makeup"}};
    CHECK(codes(validate_pipeline(spec, state)).contains("DUPLICATE_NODE"));

    spec.nodes = {{"t", "mock_tryon"}, {"m", "mock_makeup"}, {"bg", "mock_background"}, {"o", "mock_object"}};
    spec.edges = {{"t", "out", "m", "person"},         // forbidden pair
                  {"t", "out", "m", "makeup_ref"},     // type mismatch
                  {"t", "nope", "bg", "person"},       // unknown port
                  {"ghost", "out", "bg", "person"}};   // unknown node
    spec.inputs = {{"t.person", chain().identity.ref().str()},
                   {"t.garment", "not-a-ref"},
                   {"bg.background_spec", chain().garment.ref().str()},
                   {"m.person", chain().identity.ref().str()}};
    const auto found = codes(validate_pipeline(spec, state));
    for (const char *code : {"FORBIDDEN_PAIR", "TYPE_MISMATCH", "UNKNOWN_PORT", "UNKNOWN_NODE", "BAD_INPUT_REF",
                             "DOUBLE_BOUND_PORT", "UNBOUND_PORT"}) {
      CAPTURE(code);
      CHECK(found.contains(code));
    }
  }

  TEST_CASE("cycles and out-of-order nodes") {
    const auto state = paper_state();
    PipelineSpec spec;
    spec.nodes = {{"a", "mock_makeup"}, {"b", "mock_makeup"}};
    spec.edges = {{"a", "out", "b", "person"}, {"b", "out", "a", "person"}};
    spec.inputs = {{"a.makeup_ref", chain().makeup_ref.ref().str()},
                   {"b.makeup_ref", chain().makeup_ref.ref().str()}};
    const auto found = codes(validate_pipeline(spec, state));
    CHECK(found.contains("CYCLE_DETECTED"));
    CHECK(found.contains("NOT_TOPOLOGICAL"));

    spec.edges = {{"b", "out", "a", "person"}};
    spec.inputs["b.person"] = chain().identity.ref().str();
    CHECK(codes(validate_pipeline(spec, state)) == std::set<std::string>{"NOT_TOPOLOGICAL"});
  }

  TEST_CASE("spec documents round-trip and hash canonically") {
    const auto spec = synthesize_pipeline(full_query(), paper_state());
    const auto back = PipelineSpec::from_json(nlohmann::json::parse(spec.to_document().dump()));
    CHECK(back == spec);
    auto shuffled = spec;
    std::reverse(shuffled.edges.begin(), shuffled.edges.end());
    CHECK(shuffled.canonical() == spec.canonical());
    CHECK(spec.to_document().at("spec_hash") == to_hex(spec.spec_hash()));
    CHECK(error_of([] { PipelineSpec::from_json({{"nodes", {{{"id", 1}}}}}); }) == ErrorCode::BadRequest);
  }
}
