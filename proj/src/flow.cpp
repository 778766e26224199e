#include "kolflow/flow.hpp"

#include <algorithm>
#include <array>
#include <functional>

namespace kolflow {

using nlohmann::json;

namespace {

struct RoleInfo {
  std::string_view role;
  ArtifactType type;
};

constexpr std::array kRoles{
    RoleInfo{"identity", ArtifactType::PersonImage},
    RoleInfo{"garment", ArtifactType::GarmentRef},
    RoleInfo{"makeup_ref", ArtifactType::MakeupRef},
    RoleInfo{"background_spec", ArtifactType::BackgroundSpec},
    RoleInfo{"object_ref", ArtifactType::ObjectRef},
    RoleInfo{"landmarks", ArtifactType::LandmarkSet},
};

std::string role_for(ArtifactType type) {
  for (const auto &r : kRoles)
    if (r.type == type) return std::string(r.role);
  return std::string(to_string(type));
}

[[noreturn]] void bad_query(const std::string &msg) {
  throw Error(ErrorCode::BadQuery, msg);
}

} // namespace

std::optional<ArtifactType> role_type(std::string_view role) {
  for (const auto &r : kRoles)
    if (r.role == role) return r.type;
  return std::nullopt;
}

std::vector<std::pair<std::string, ArtifactType>> all_roles() {
  std::vector<std::pair<std::string, ArtifactType>> out;
  for (const auto &r : kRoles) out.emplace_back(std::string(r.role), r.type);
  return out;
}

std::string input_key(std::string_view node, std::string_view port) {
  return std::string(node) + "." + std::string(port);
}

std::optional<std::pair<std::string, std::string>> split_input_key(std::string_view key) {
  const auto dot = key.find('.');
  if (dot == std::string_view::npos || dot == 0 || dot + 1 == key.size())
    return std::nullopt;
  return std::pair{std::string(key.substr(0, dot)), std::string(key.substr(dot + 1))};
}

// ---------------------------------------------------------------- PipelineSpec

json PipelineSpec::to_json() const {
  json jnodes = json::array();
  for (const auto &n : nodes) {
    json jn{{"id", n.id}, {"service", n.service}};
    if (n.params.is_object() && !n.params.empty()) jn["params"] = n.params;
    jnodes.push_back(std::move(jn));
  }
  auto sorted = edges;
  std::sort(sorted.begin(), sorted.end());
  json jedges = json::array();
  for (const auto &e : sorted)
    jedges.push_back(
        {{"from", e.from}, {"from_port", e.from_port}, {"to", e.to}, {"to_port", e.to_port}});
  json jinputs = json::object();
  for (const auto &[k, v] : inputs) jinputs[k] = v;
  return {{"nodes", std::move(jnodes)}, {"edges", std::move(jedges)}, {"inputs", std::move(jinputs)}};
}

std::string PipelineSpec::canonical() const { return to_json().dump(); }

Digest PipelineSpec::spec_hash() const { return sha256(canonical()); }

json PipelineSpec::to_document() const {
  json doc = to_json();
  doc["spec_hash"] = to_hex(spec_hash());
  return doc;
}

PipelineSpec PipelineSpec::from_json(const json &doc) {
  if (!doc.is_object()) throw Error(ErrorCode::BadRequest, "pipeline must be an object");
  try {
    PipelineSpec spec;
    for (const auto &n : doc.at("nodes")) {
      PipelineNode node{n.at("id").get<std::string>(), n.at("service").get<std::string>()};
      if (n.contains("params")) {
        if (!n.at("params").is_object())
          throw Error(ErrorCode::BadRequest, "node params must be an object");
        node.params = n.at("params");
      }
      spec.nodes.push_back(std::move(node));
    }
    for (const auto &e : doc.value("edges", json::array()))
      spec.edges.push_back({e.at("from").get<std::string>(), e.at("from_port").get<std::string>(),
                            e.at("to").get<std::string>(), e.at("to_port").get<std::string>()});
    const json inputs_doc = doc.value("inputs", json::object());
    for (const auto &[k, v] : inputs_doc.items())
      spec.inputs[k] = v.get<std::string>();
    return spec;
  } catch (const json::exception &e) {
    throw Error(ErrorCode::BadRequest, std::string("malformed pipeline: ") + e.what());
  }
}

const PipelineNode *PipelineSpec::find_node(std::string_view id) const {
  for (const auto &n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

// ------------------------------------------------------------- CapabilityQuery

CapabilityQuery CapabilityQuery::from_json(const json &doc) {
  if (!doc.is_object()) bad_query("query must be an object");
  CapabilityQuery q;
  try {
    if (!doc.contains("capabilities") || !doc.at("capabilities").is_array())
      bad_query("query needs a `capabilities` array");
    for (const auto &c : doc.at("capabilities")) {
      const auto name = c.get<std::string>();
      const auto cap = parse_capability(name);
      if (!cap) bad_query("unknown capability '" + name + "'");
      q.capabilities.insert(*cap);
    }
    q.align_faces = doc.value("align_faces", false);
    const json inputs_doc = doc.value("inputs", json::object());
    for (const auto &[role, ref] : inputs_doc.items()) {
      const auto type = role_type(role);
      if (!type) bad_query("unknown input role '" + role + "'");
      ArtifactRef parsed = [&] {
        try {
          return ArtifactRef::parse(ref.get<std::string>());
        } catch (const Error &e) {
          bad_query(e.what());
        }
      }();
      q.provided_inputs.emplace(role, parsed);
    }
    const json services_doc = doc.value("services", json::object());
    for (const auto &[cap, id] : services_doc.items()) {
      const auto c = parse_capability(cap);
      if (!c) bad_query("unknown capability '" + cap + "' in services");
      q.services[*c] = id.get<std::string>();
    }
  } catch (const json::exception &e) {
    bad_query(std::string("malformed query: ") + e.what());
  }
  if (q.capabilities.empty()) bad_query("query names no capabilities");
  for (const auto &[role, ref] : q.provided_inputs)
    if (ref.type != *role_type(role))
      bad_query("input '" + role + "' must be " + std::string(to_string(*role_type(role))) +
                ", got " + std::string(to_string(ref.type)));
  return q;
}

json CapabilityQuery::to_json() const {
  json caps = json::array();
  for (auto c : capabilities) caps.push_back(std::string(to_string(c)));
  json inputs = json::object();
  for (const auto &[role, ref] : provided_inputs) inputs[role] = ref.str();
  json services_doc = json::object();
  for (const auto &[cap, id] : services) services_doc[std::string(to_string(cap))] = id;
  return {{"capabilities", std::move(caps)},
          {"align_faces", align_faces},
          {"inputs", std::move(inputs)},
          {"services", std::move(services_doc)}};
}

// ---------------------------------------------------------- topological_order

std::vector<std::string>
topological_order(const std::vector<std::string> &nodes,
                  const std::vector<std::pair<std::string, std::string>> &edges) {
  std::map<std::string, std::size_t> indegree;
  std::map<std::string, std::vector<std::string>> succ;
  for (const auto &n : nodes) {
    if (!indegree.emplace(n, 0).second)
      throw Error(ErrorCode::BadRequest, "duplicate node id '" + n + "'");
    succ[n];
  }
  for (const auto &[from, to] : edges) {
    if (!indegree.contains(from) || !indegree.contains(to))
      throw Error(ErrorCode::BadRequest, "edge " + from + "->" + to + " names an unknown node");
    succ[from].push_back(to);
    ++indegree[to];
  }

  std::set<std::string> ready;
  for (const auto &[n, d] : indegree)
    if (d == 0) ready.insert(n);

  std::vector<std::string> order;
  order.reserve(nodes.size());
  while (!ready.empty()) {
    std::string next = *ready.begin();
    ready.erase(ready.begin());
    for (const auto &s : succ[next])
      if (--indegree[s] == 0) ready.insert(s);
    order.push_back(std::move(next));
  }
  if (order.size() == nodes.size()) return order;

  // Every remaining node has an unprocessed predecessor; walk backwards
  // through remaining predecessors until a node repeats.
  std::map<std::string, std::string> some_pred;
  for (const auto &[from, to] : edges)
    if (indegree[from] > 0 && indegree[to] > 0) some_pred.emplace(to, from);
  std::string cur;
  for (const auto &[n, d] : indegree)
    if (d > 0) {
      cur = n;
      break;
    }
  std::vector<std::string> walk;
  std::map<std::string, std::size_t> pos;
  while (!pos.contains(cur)) {
    pos[cur] = walk.size();
    walk.push_back(cur);
    cur = some_pred.at(cur);
  }
  std::vector<std::string> cycle(walk.begin() + static_cast<std::ptrdiff_t>(pos[cur]), walk.end());
  std::reverse(cycle.begin(), cycle.end());
  std::rotate(cycle.begin(), std::min_element(cycle.begin(), cycle.end()), cycle.end());
  std::string text;
  for (const auto &c : cycle) text += c + " -> ";
  text += cycle.front();
  throw Error(ErrorCode::CycleDetected, "cycle detected: " + text, json{{"cycle", cycle}});
}

// --------------------------------------------------------------------- bind_io

Bindings bind_io(const std::vector<PipelineNode> &ordered, const RegistryState &state,
                 const std::map<std::string, ArtifactRef> &provided_inputs) {
  Bindings out;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    const auto &node = ordered[i];
    const auto &desc = state.service(node.service);
    for (const auto &port : desc.inputs) {
      bool bound = false;
      for (std::size_t j = i; j-- > 0 && !bound;) {
        const auto &producer = state.service(ordered[j].service);
        if (state.rules.rule(producer.capability, desc.capability) == DependencyRule::Forbidden)
          continue;
        for (const auto &op : producer.outputs) {
          if (op.type != port.type) continue;
          out.edges.push_back({ordered[j].id, op.name, node.id, port.name});
          bound = true;
          break;
        }
      }
      if (bound) continue;

      const ArtifactRef *match = nullptr;
      std::string match_role;
      for (const auto &[role, ref] : provided_inputs) {
        if (ref.type != port.type) continue;
        if (match)
          throw Error(ErrorCode::AmbiguousExternalInput,
                      "inputs '" + match_role + "' and '" + role + "' both provide " +
                          std::string(to_string(port.type)) + " for " + node.id + "." +
                          port.name,
                      json{{"node", node.id}, {"port", port.name}});
        match = &ref;
        match_role = role;
      }
      if (match) {
        out.source_bindings[input_key(node.id, port.name)] = match->str();
      } else if (port.required) {
        throw Error(ErrorCode::UnboundPort,
                    "no producer or provided input for " + node.id + "." + port.name + " (" +
                        std::string(to_string(port.type)) + ")",
                    json{{"node", node.id},
                         {"port", port.name},
                         {"type", std::string(to_string(port.type))}});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------- validate_pipeline

std::vector<Violation> validate_pipeline(const PipelineSpec &spec, const RegistryState &state) {
  std::vector<Violation> v;
  auto add = [&](std::string code, std::string msg) { v.push_back({std::move(code), std::move(msg)}); };

  if (spec.nodes.empty()) add("EMPTY_PIPELINE", "pipeline has no nodes");

  std::map<std::string, std::size_t> index;
  std::map<std::string, const ServiceDescriptor *> desc;
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    const auto &n = spec.nodes[i];
    if (!index.emplace(n.id, i).second) {
      add("DUPLICATE_NODE", "node id '" + n.id + "' appears more than once");
      continue;
    }
    auto it = state.services.find(n.service);
    if (it == state.services.end())
      add("UNKNOWN_SERVICE", "node '" + n.id + "' uses unregistered service '" + n.service + "'");
    else
      desc[n.id] = &it->second;
  }

  std::map<std::string, int> bind_count;
  std::vector<std::pair<std::string, std::string>> graph_edges;
  for (const auto &e : spec.edges) {
    const std::string label = e.from + "." + e.from_port + " -> " + e.to + "." + e.to_port;
    if (!index.contains(e.from) || !index.contains(e.to)) {
      add("UNKNOWN_NODE", "edge " + label + " references an unknown node");
      continue;
    }
    graph_edges.emplace_back(e.from, e.to);
    ++bind_count[input_key(e.to, e.to_port)];
    if (!desc.contains(e.from) || !desc.contains(e.to)) continue;
    const auto *from = desc[e.from];
    const auto *to = desc[e.to];
    if (!from->find_output(e.from_port)) {
      add("UNKNOWN_PORT", "edge " + label + ": '" + from->service_id + "' has no output '" + e.from_port + "'");
      continue;
    }
    if (!to->find_input(e.to_port)) {
      add("UNKNOWN_PORT", "edge " + label + ": '" + to->service_id + "' has no input '" + e.to_port + "'");
      continue;
    }
    const auto verdict = check_edge(state, {from->service_id, e.from_port}, {to->service_id, e.to_port});
    if (!verdict.compatible()) add(std::string(to_string(*verdict.problem)), "edge " + label + ": " + verdict.reason);
  }

  for (const auto &[key, value] : spec.inputs) {
    const auto parts = split_input_key(key);
    if (!parts || !index.contains(parts->first)) {
      add("UNKNOWN_NODE", "input binding '" + key + "' does not name a node port");
      continue;
    }
    ++bind_count[key];
    if (!desc.contains(parts->first)) continue;
    const auto *port = desc[parts->first]->find_input(parts->second);
    if (!port) {
      add("UNKNOWN_PORT", "input binding '" + key + "': no such input port");
      continue;
    }
    try {
      const auto ref = ArtifactRef::parse(value);
      if (ref.type != port->type)
        add("TYPE_MISMATCH", "input binding '" + key + "' is " + std::string(to_string(ref.type)) +
                                 ", port expects " + std::string(to_string(port->type)));
    } catch (const Error &) {
      add("BAD_INPUT_REF", "input binding '" + key + "' is not an artifact ref: " + value);
    }
  }

  for (const auto &n : spec.nodes) {
    if (!desc.contains(n.id)) continue;
    for (const auto &p : desc[n.id]->inputs) {
      const auto key = input_key(n.id, p.name);
      const int count = bind_count.contains(key) ? bind_count[key] : 0;
      if (count == 0 && p.required)
        add("UNBOUND_PORT", "required port " + key + " is not bound");
      else if (count > 1)
        add("DOUBLE_BOUND_PORT", "port " + key + " is bound " + std::to_string(count) + " times");
    }
  }

  if (index.size() == spec.nodes.size()) {
    std::vector<std::string> ids;
    for (const auto &n : spec.nodes) ids.push_back(n.id);
    try {
      topological_order(ids, graph_edges);
    } catch (const Error &e) {
      if (e.code() != ErrorCode::CycleDetected) throw;
      add("CYCLE_DETECTED", e.what());
    }
  }

  for (const auto &[from, to] : graph_edges)
    if (index[from] >= index[to])
      add("NOT_TOPOLOGICAL", "edge " + from + " -> " + to + " points backwards in node order");

  for (std::size_t i = 0; i < spec.nodes.size(); ++i)
    for (std::size_t j = i + 1; j < spec.nodes.size(); ++j) {
      const auto &a = spec.nodes[i];
      const auto &b = spec.nodes[j];
      if (!desc.contains(a.id) || !desc.contains(b.id)) continue;
      const auto ca = desc[a.id]->capability;
      const auto cb = desc[b.id]->capability;
      if (state.rules.precedes(cb, ca))
        add("ORDER_RULE_VIOLATED", "'" + b.id + "' (" + std::string(to_string(cb)) +
                                       ") must run before '" + a.id + "' (" +
                                       std::string(to_string(ca)) + ")");
    }
  return v;
}

json to_json(const std::vector<Violation> &violations) {
  json arr = json::array();
  for (const auto &v : violations) arr.push_back({{"code", v.code}, {"message", v.message}});
  return arr;
}

// -------------------------------------------------------- synthesize_pipeline

PipelineSpec synthesize_pipeline(const CapabilityQuery &query, const RegistryState &state) {
  if (query.capabilities.empty()) bad_query("query names no capabilities");
  for (const auto &[role, ref] : query.provided_inputs) {
    const auto type = role_type(role);
    if (!type) bad_query("unknown input role '" + role + "'");
    if (ref.type != *type) bad_query("input '" + role + "' has the wrong artifact type");
  }

  std::set<Capability> caps = query.capabilities;
  if (query.align_faces) {
    caps.insert(Capability::FaceExtractAlign);
    caps.insert(Capability::FaceReintegrate);
  }

  std::map<std::string, std::string> service_of;
  for (auto cap : caps) {
    const auto name = std::string(to_string(cap));
    if (auto it = query.services.find(cap); it != query.services.end()) {
      auto s = state.services.find(it->second);
      if (s == state.services.end() || s->second.capability != cap)
        throw Error(ErrorCode::UnsatisfiableQuery,
                    "service '" + it->second + "' is not a registered " + name + " service",
                    json{{"missing", name}});
      service_of[name] = it->second;
      continue;
    }
    std::vector<std::string> candidates;
    for (const auto &[id, d] : state.services)
      if (d.capability == cap) candidates.push_back(id);
    if (candidates.empty())
      throw Error(ErrorCode::UnsatisfiableQuery, "no registered service provides '" + name + "'",
                  json{{"missing", name}});
    if (candidates.size() > 1)
      throw Error(ErrorCode::AmbiguousService,
                  std::to_string(candidates.size()) + " services provide '" + name +
                      "'; name one in the query",
                  json{{"capability", name}, {"candidates", candidates}});
    service_of[name] = candidates.front();
  }

  std::vector<std::string> ids;
  std::vector<std::pair<std::string, std::string>> constraints;
  for (auto a : caps) {
    ids.emplace_back(to_string(a));
    for (auto b : caps)
      if (a != b && state.rules.precedes(a, b))
        constraints.emplace_back(std::string(to_string(a)), std::string(to_string(b)));
  }
  std::vector<std::string> order;
  try {
    order = topological_order(ids, constraints);
  } catch (const Error &e) {
    if (e.code() != ErrorCode::CycleDetected) throw;
    throw Error(ErrorCode::CyclicConstraints,
                std::string("dependency rules admit no order: ") + e.what(), e.details());
  }

  PipelineSpec spec;
  for (const auto &id : order) spec.nodes.push_back({id, service_of[id]});

  Bindings bindings;
  try {
    bindings = bind_io(spec.nodes, state, query.provided_inputs);
  } catch (const Error &e) {
    if (e.code() != ErrorCode::UnboundPort) throw;
    const auto type = parse_artifact_type(e.details().at("type").get<std::string>());
    const auto role = role_for(*type);
    throw Error(ErrorCode::UnsatisfiableQuery,
                "missing required input '" + role + "' for " +
                    e.details().at("node").get<std::string>() + "." +
                    e.details().at("port").get<std::string>(),
                json{{"missing", role}});
  }
  spec.edges = std::move(bindings.edges);
  std::sort(spec.edges.begin(), spec.edges.end());
  spec.inputs = std::move(bindings.source_bindings);

  const auto violations = validate_pipeline(spec, state);
  if (!violations.empty())
    throw Error(ErrorCode::ValidationFailed, "synthesized pipeline failed validation",
                json{{"violations", to_json(violations)}});
  return spec;
}

} // namespace kolflow
