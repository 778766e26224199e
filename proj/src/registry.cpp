#include "kolflow/registry.hpp"

#include <algorithm>
#include <functional>

namespace kolflow {

using nlohmann::json;

const InputPort *ServiceDescriptor::find_input(std::string_view port) const {
  for (const auto &p : inputs)
    if (p.name == port) return &p;
  return nullptr;
}

const OutputPort *ServiceDescriptor::find_output(std::string_view port) const {
  for (const auto &p : outputs)
    if (p.name == port) return &p;
  return nullptr;
}

namespace {

bool is_id_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
}

bool valid_identifier(std::string_view id) {
  return !id.empty() && std::all_of(id.begin(), id.end(), is_id_char);
}

[[noreturn]] void invalid(const std::string &what) {
  throw Error(ErrorCode::InvalidDescriptor, what);
}

} // namespace

void validate_descriptor(const ServiceDescriptor &d) {
  if (!valid_identifier(d.service_id))
    invalid("service_id must match [a-z0-9_-]+: '" + d.service_id + "'");
  if (d.outputs.empty())
    invalid("service '" + d.service_id + "' declares no output ports");
  std::set<std::string> names;
  for (const auto &p : d.inputs) {
    if (p.name.empty()) invalid("empty input port name");
    if (!names.insert(p.name).second) invalid("duplicate port name '" + p.name + "'");
  }
  for (const auto &p : d.outputs) {
    if (p.name.empty()) invalid("empty output port name");
    if (!names.insert(p.name).second) invalid("duplicate port name '" + p.name + "'");
  }
  if (d.backend.is_local()) {
    if (d.backend.local().algorithm_id.empty()) invalid("local binding needs algorithm_id");
  } else {
    const auto &r = d.backend.remote();
    if (r.base_url.rfind("http://", 0) != 0 && r.base_url.rfind("https://", 0) != 0)
      invalid("remote base_url must start with http:// or https://");
    if (r.timeout_ms == 0) invalid("remote timeout_ms must be positive");
  }
}

Capability capability_or_throw(std::string_view name) {
  if (auto cap = parse_capability(name)) return *cap;
  throw Error(ErrorCode::UnknownCapability,
              "unknown capability '" + std::string(name) + "'");
}

ArtifactType artifact_type_or_throw(std::string_view name, ErrorCode code) {
  if (auto t = parse_artifact_type(name)) return *t;
  throw Error(code, "unknown artifact type '" + std::string(name) + "'");
}

json to_json(const ServiceDescriptor &d) {
  json inputs = json::array();
  for (const auto &p : d.inputs)
    inputs.push_back({{"port", p.name},
                      {"type", std::string(to_string(p.type))},
                      {"required", p.required}});
  json outputs = json::array();
  for (const auto &p : d.outputs)
    outputs.push_back({{"port", p.name}, {"type", std::string(to_string(p.type))}});
  json backend;
  if (d.backend.is_local()) {
    backend = {{"kind", "local"}, {"algorithm_id", d.backend.local().algorithm_id}};
  } else {
    backend = {{"kind", "remote"},
               {"base_url", d.backend.remote().base_url},
               {"timeout_ms", d.backend.remote().timeout_ms}};
  }
  backend["exclusive"] = d.backend.exclusive;
  return {{"service_id", d.service_id},
          {"capability", std::string(to_string(d.capability))},
          {"version", d.version},
          {"inputs", std::move(inputs)},
          {"outputs", std::move(outputs)},
          {"backend", std::move(backend)}};
}

ServiceDescriptor descriptor_from_json(const json &doc) {
  try {
    ServiceDescriptor d;
    d.service_id = doc.at("service_id").get<std::string>();
    d.capability = capability_or_throw(doc.at("capability").get<std::string>());
    d.version = doc.value("version", std::string("1"));
    for (const auto &p : doc.at("inputs"))
      d.inputs.push_back({p.at("port").get<std::string>(),
                          artifact_type_or_throw(p.at("type").get<std::string>(),
                                                 ErrorCode::InvalidDescriptor),
                          p.value("required", true)});
    for (const auto &p : doc.at("outputs"))
      d.outputs.push_back({p.at("port").get<std::string>(),
                           artifact_type_or_throw(p.at("type").get<std::string>(),
                                                  ErrorCode::InvalidDescriptor)});
    const auto &b = doc.at("backend");
    const auto kind = b.at("kind").get<std::string>();
    if (kind == "local") {
      d.backend.target = LocalBinding{b.at("algorithm_id").get<std::string>()};
    } else if (kind == "remote") {
      const auto timeout = b.value("timeout_ms", std::int64_t{30000});
      if (timeout <= 0 || timeout > std::numeric_limits<std::uint32_t>::max())
        invalid("remote timeout_ms must be a positive integer");
      d.backend.target = RemoteBinding{b.at("base_url").get<std::string>(),
                                       static_cast<std::uint32_t>(timeout)};
    } else {
      invalid("backend kind must be local or remote");
    }
    d.backend.exclusive = b.value("exclusive", false);
    return d;
  } catch (const json::exception &e) {
    invalid(std::string("malformed descriptor: ") + e.what());
  }
}

std::string_view to_string(DependencyRule rule) {
  switch (rule) {
  case DependencyRule::Before:
    return "before";
  case DependencyRule::Forbidden:
    return "forbidden";
  default:
    return "allowed";
  }
}

std::optional<DependencyRule> parse_dependency_rule(std::string_view name) {
  if (name == "before") return DependencyRule::Before;
  if (name == "allowed") return DependencyRule::Allowed;
  if (name == "forbidden") return DependencyRule::Forbidden;
  return std::nullopt;
}

DependencyMatrix DependencyMatrix::defaults() {
  using C = Capability;
  DependencyMatrix m;
  m.set(C::Tryon, C::Makeup, DependencyRule::Before);
  m.set(C::Makeup, C::Background, DependencyRule::Before);
  m.set(C::Background, C::ObjectInteraction, DependencyRule::Before);
  m.set(C::FaceExtractAlign, C::Makeup, DependencyRule::Before);
  m.set(C::Makeup, C::FaceReintegrate, DependencyRule::Before);
  m.set(C::FaceReintegrate, C::Background, DependencyRule::Before);
  m.set(C::Tryon, C::FaceExtractAlign, DependencyRule::Before);
  return m;
}

DependencyRule DependencyMatrix::rule(Capability from, Capability to) const {
  auto it = entries_.find({from, to});
  return it == entries_.end() ? DependencyRule::Allowed : it->second;
}

void DependencyMatrix::set(Capability from, Capability to, DependencyRule rule) {
  if (rule == DependencyRule::Before) {
    if (from == to)
      throw Error(ErrorCode::ConflictingRule,
                  "capability cannot precede itself: " + std::string(to_string(from)));
    if (this->rule(to, from) == DependencyRule::Before)
      throw Error(ErrorCode::ConflictingRule,
                  "(" + std::string(to_string(to)) + ", " +
                      std::string(to_string(from)) +
                      ") is already `before`; the reverse rule forms a 2-cycle");
  }
  if (rule == DependencyRule::Allowed)
    entries_.erase({from, to});
  else
    entries_[{from, to}] = rule;
}

bool DependencyMatrix::precedes(Capability a, Capability b) const {
  std::set<Capability> seen;
  std::function<bool(Capability)> reach = [&](Capability cur) {
    for (const auto &[key, r] : entries_) {
      if (r != DependencyRule::Before || key.first != cur) continue;
      if (key.second == b) return true;
      if (seen.insert(key.second).second && reach(key.second)) return true;
    }
    return false;
  };
  return reach(a);
}

bool DependencyMatrix::is_acyclic() const {
  for (auto c : kAllCapabilities)
    if (precedes(c, c)) return false;
  return true;
}

const ServiceDescriptor &RegistryState::service(std::string_view id) const {
  auto it = services.find(std::string(id));
  if (it == services.end())
    throw Error(ErrorCode::UnknownService, "unknown service '" + std::string(id) + "'");
  return it->second;
}

std::string_view to_string(EdgeProblem problem) {
  return problem == EdgeProblem::TypeMismatch ? "TYPE_MISMATCH" : "FORBIDDEN_PAIR";
}

EdgeVerdict check_edge(const RegistryState &state, const PortRef &from,
                       const PortRef &to) {
  const auto &producer = state.service(from.service);
  const auto &consumer = state.service(to.service);
  const auto *out = producer.find_output(from.port);
  if (!out)
    throw Error(ErrorCode::UnknownPort,
                "service '" + from.service + "' has no output port '" + from.port + "'");
  const auto *in = consumer.find_input(to.port);
  if (!in)
    throw Error(ErrorCode::UnknownPort,
                "service '" + to.service + "' has no input port '" + to.port + "'");
  if (out->type != in->type)
    return {EdgeProblem::TypeMismatch,
            from.service + "." + from.port + " produces " +
                std::string(to_string(out->type)) + " but " + to.service + "." +
                to.port + " expects " + std::string(to_string(in->type))};
  if (state.rules.rule(producer.capability, consumer.capability) ==
      DependencyRule::Forbidden)
    return {EdgeProblem::ForbiddenPair,
            "capability pair (" + std::string(to_string(producer.capability)) +
                ", " + std::string(to_string(consumer.capability)) +
                ") is forbidden"};
  return {};
}

json to_json(const DependencyMatrix &matrix) {
  json rules = json::array();
  for (const auto &[key, r] : matrix.entries())
    rules.push_back({{"from", std::string(to_string(key.first))},
                     {"to", std::string(to_string(key.second))},
                     {"rule", std::string(to_string(r))}});
  return rules;
}

DependencyMatrix dependency_matrix_from_json(const json &doc) {
  DependencyMatrix m;
  try {
    for (const auto &entry : doc) {
      const auto rule = parse_dependency_rule(entry.at("rule").get<std::string>());
      if (!rule) throw Error(ErrorCode::BadConfig, "unknown dependency rule");
      m.set(capability_or_throw(entry.at("from").get<std::string>()),
            capability_or_throw(entry.at("to").get<std::string>()), *rule);
    }
  } catch (const json::exception &e) {
    throw Error(ErrorCode::BadConfig, std::string("malformed rules: ") + e.what());
  }
  return m;
}

Registry::Registry(std::set<std::string> local_algorithms)
    : local_algorithms_(std::move(local_algorithms)),
      state_(std::make_shared<const RegistryState>()) {
  if (!state_->rules.is_acyclic())
    throw Error(ErrorCode::ConflictingRule, "default dependency rules are cyclic");
}

std::string Registry::register_service(const ServiceDescriptor &descriptor) {
  validate_descriptor(descriptor);
  if (descriptor.backend.is_local() &&
      !local_algorithms_.contains(descriptor.backend.local().algorithm_id))
    throw Error(ErrorCode::UnknownAlgorithmId,
                "no built-in algorithm '" + descriptor.backend.local().algorithm_id + "'");
  std::lock_guard lock(mutex_);
  if (state_->services.contains(descriptor.service_id))
    throw Error(ErrorCode::DuplicateServiceId,
                "service '" + descriptor.service_id + "' is already registered");
  auto next = std::make_shared<RegistryState>(*state_);
  next->services.emplace(descriptor.service_id, descriptor);
  state_ = std::move(next);
  return descriptor.service_id;
}

ServiceDescriptor Registry::unregister_service(std::string_view service_id) {
  std::lock_guard lock(mutex_);
  auto next = std::make_shared<RegistryState>(*state_);
  auto it = next->services.find(std::string(service_id));
  if (it == next->services.end())
    throw Error(ErrorCode::UnknownService,
                "unknown service '" + std::string(service_id) + "'");
  ServiceDescriptor removed = std::move(it->second);
  next->services.erase(it);
  state_ = std::move(next);
  return removed;
}

std::vector<ServiceDescriptor>
Registry::list_services(std::optional<Capability> filter) const {
  const auto state = snapshot();
  std::vector<ServiceDescriptor> out;
  for (const auto &[id, d] : state->services) // std::map: sorted by id
    if (!filter || d.capability == *filter) out.push_back(d);
  return out;
}

std::optional<ServiceDescriptor> Registry::find(std::string_view service_id) const {
  const auto state = snapshot();
  auto it = state->services.find(std::string(service_id));
  if (it == state->services.end()) return std::nullopt;
  return it->second;
}

DependencyMatrix Registry::set_dependency_rule(Capability from, Capability to,
                                               DependencyRule rule) {
  std::lock_guard lock(mutex_);
  auto next = std::make_shared<RegistryState>(*state_);
  next->rules.set(from, to, rule);
  DependencyMatrix result = next->rules;
  state_ = std::move(next);
  return result;
}

EdgeVerdict Registry::check_edge(const PortRef &from, const PortRef &to) const {
  return kolflow::check_edge(*snapshot(), from, to);
}

std::shared_ptr<const RegistryState> Registry::snapshot() const {
  std::lock_guard lock(mutex_);
  return state_;
}

void Registry::restore(RegistryState state) {
  for (const auto &[id, d] : state.services) {
    validate_descriptor(d);
    if (d.backend.is_local() && !local_algorithms_.contains(d.backend.local().algorithm_id))
      throw Error(ErrorCode::UnknownAlgorithmId,
                  "no built-in algorithm '" + d.backend.local().algorithm_id + "'");
  }
  auto next = std::make_shared<const RegistryState>(std::move(state));
  std::lock_guard lock(mutex_);
  state_ = std::move(next);
}

json Registry::to_snapshot_json() const {
  const auto state = snapshot();
  json services = json::array();
  for (const auto &[id, d] : state->services) services.push_back(to_json(d));
  return {{"services", std::move(services)}, {"rules", to_json(state->rules)}};
}

void Registry::load_snapshot_json(const json &doc) {
  if (!doc.is_object()) throw Error(ErrorCode::BadConfig, "registry snapshot must be an object");
  RegistryState state;
  if (doc.contains("rules")) state.rules = dependency_matrix_from_json(doc.at("rules"));
  if (!state.rules.is_acyclic())
    throw Error(ErrorCode::BadConfig, "snapshot dependency rules contain a cycle");
  for (const auto &entry : doc.value("services", json::array())) {
    auto d = descriptor_from_json(entry);
    const auto id = d.service_id;
    if (!state.services.emplace(id, std::move(d)).second)
      throw Error(ErrorCode::DuplicateServiceId, "duplicate service '" + id + "' in snapshot");
  }
  restore(std::move(state));
}

} // namespace kolflow
