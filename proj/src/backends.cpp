#include "kolflow/backends.hpp"

#include "kolflow/face_align.hpp"
#include "kolflow/mocks.hpp"
#include "kolflow/remote.hpp"

namespace kolflow {

using nlohmann::json;

json AlgorithmDescriptor::to_json() const {
  json in = json::array();
  for (const auto &p : inputs)
    in.push_back({{"port", p.name}, {"type", std::string(kolflow::to_string(p.type))},
                  {"required", p.required}});
  json out = json::array();
  for (const auto &p : outputs)
    out.push_back({{"port", p.name}, {"type", std::string(kolflow::to_string(p.type))}});
  json params = json::object();
  for (const auto &[name, spec] : parameters)
    params[name] = {{"type", spec.type}, {"default", spec.default_value}};
  return {{"algorithm_id", algorithm_id},
          {"capability", std::string(kolflow::to_string(capability))},
          {"deterministic", deterministic},
          {"inputs", std::move(in)},
          {"outputs", std::move(out)},
          {"parameters", std::move(params)}};
}

AlgorithmDescriptor AlgorithmDescriptor::from_json(const json &doc) {
  AlgorithmDescriptor d;
  try {
    d.algorithm_id = doc.at("algorithm_id").get<std::string>();
    const auto cap = parse_capability(doc.at("capability").get<std::string>());
    if (!cap) throw Error(ErrorCode::ProtocolError, "descriptor names an unknown capability");
    d.capability = *cap;
    d.deterministic = doc.value("deterministic", false);
    for (const auto &p : doc.at("inputs"))
      d.inputs.push_back({p.at("port").get<std::string>(),
                          artifact_type_or_throw(p.at("type").get<std::string>(),
                                                 ErrorCode::ProtocolError),
                          p.value("required", true)});
    for (const auto &p : doc.at("outputs"))
      d.outputs.push_back({p.at("port").get<std::string>(),
                           artifact_type_or_throw(p.at("type").get<std::string>(),
                                                  ErrorCode::ProtocolError)});
    const json parameters_doc = doc.value("parameters", json::object());
    for (const auto &[name, spec] : parameters_doc.items())
      d.parameters[name] = {spec.at("type").get<std::string>(), spec.value("default", json())};
  } catch (const json::exception &e) {
    throw Error(ErrorCode::ProtocolError, std::string("malformed descriptor: ") + e.what());
  }
  if (d.outputs.empty())
    throw Error(ErrorCode::SignatureMismatch,
                "algorithm '" + d.algorithm_id + "' advertises no output ports");
  std::set<std::string> names;
  for (const auto &p : d.inputs)
    if (!names.insert(p.name).second)
      throw Error(ErrorCode::SignatureMismatch, "duplicate port '" + p.name + "'");
  for (const auto &p : d.outputs)
    if (!names.insert(p.name).second)
      throw Error(ErrorCode::SignatureMismatch, "duplicate port '" + p.name + "'");
  return d;
}

void check_inputs(const std::vector<InputPort> &signature, const PortMap &inputs) {
  for (const auto &port : signature) {
    auto it = inputs.find(port.name);
    if (it == inputs.end()) {
      if (port.required)
        throw Error(ErrorCode::MalformedInput, "missing required input '" + port.name + "'");
      continue;
    }
    if (it->second.type() != port.type)
      throw Error(ErrorCode::MalformedInput,
                  "input '" + port.name + "' is " + std::string(to_string(it->second.type())) +
                      ", expected " + std::string(to_string(port.type)));
  }
  for (const auto &[name, art] : inputs) {
    bool known = false;
    for (const auto &port : signature) known = known || port.name == name;
    if (!known) throw Error(ErrorCode::MalformedInput, "unexpected input port '" + name + "'");
  }
}

json resolve_params(const std::map<std::string, ParameterSpec> &spec, const json &params) {
  if (!params.is_null() && !params.is_object())
    throw Error(ErrorCode::BadParams, "params must be an object");
  json out = json::object();
  for (const auto &[name, p] : spec) out[name] = p.default_value;
  if (params.is_null()) return out;
  for (const auto &[name, value] : params.items()) {
    auto it = spec.find(name);
    if (it == spec.end()) throw Error(ErrorCode::BadParams, "unknown parameter '" + name + "'");
    const auto &type = it->second.type;
    const bool ok = (type == "integer" && value.is_number_integer()) ||
                    (type == "number" && value.is_number()) ||
                    (type == "string" && value.is_string()) ||
                    (type == "boolean" && value.is_boolean()) ||
                    (type == "object" && value.is_object());
    if (!ok) throw Error(ErrorCode::BadParams, "parameter '" + name + "' must be " + type);
    out[name] = value;
  }
  return out;
}

namespace {

constexpr ArtifactType kPerson = ArtifactType::PersonImage;

AlgorithmDescriptor mock_descriptor(std::string id, Capability cap, std::string ref_port,
                                    ArtifactType ref_type) {
  return {std::move(id),
          cap,
          true,
          {{"person", kPerson, true}, {std::move(ref_port), ref_type, true}},
          {{"out", kPerson}},
          {}};
}

PortMap single(const Raster &raster) {
  PortMap out;
  out.emplace("out", Artifact::from_raster(kPerson, raster));
  return out;
}

std::vector<Algorithm> builtin_algorithms() {
  std::vector<Algorithm> algs;
  algs.push_back({mock_descriptor("mock_tryon", Capability::Tryon, "garment", ArtifactType::GarmentRef),
                  [](const PortMap &in, const json &) {
                    return single(mocks::tryon(in.at("person").raster(), in.at("garment").raster()));
                  }});
  algs.push_back({mock_descriptor("mock_makeup", Capability::Makeup, "makeup_ref", ArtifactType::MakeupRef),
                  [](const PortMap &in, const json &) {
                    return single(mocks::makeup(in.at("person").raster(), in.at("makeup_ref").raster()));
                  }});
  algs.push_back({mock_descriptor("mock_background", Capability::Background, "background_spec",
                                  ArtifactType::BackgroundSpec),
                  [](const PortMap &in, const json &) {
                    return single(mocks::background(in.at("person").raster(),
                                                    in.at("background_spec").text()));
                  }});
  algs.push_back({mock_descriptor("mock_object", Capability::ObjectInteraction, "object_ref",
                                  ArtifactType::ObjectRef),
                  [](const PortMap &in, const json &) {
                    return single(mocks::object_interaction(in.at("person").raster(),
                                                            in.at("object_ref").raster()));
                  }});

  algs.push_back(
      {{"face_extract_align",
        Capability::FaceExtractAlign,
        true,
        {{"person", kPerson, true}, {"landmarks", ArtifactType::LandmarkSet, true}},
        {{"face", kPerson}, {"crop", ArtifactType::FaceCrop}, {"session", ArtifactType::AlignSession}},
        {{"template", {"object", json::object()}}}},
       [](const PortMap &in, const json &params) {
         const auto &tdoc = params.at("template");
         const LandmarkTemplate tmpl = tdoc.empty() ? default_template() : template_from_json(tdoc);
         auto aligned = extract_aligned_face(in.at("person").raster(), in.at("landmarks").landmarks(), tmpl);
         PortMap out;
         out.emplace("face", Artifact::from_raster(kPerson, aligned.crop));
         out.emplace("crop", Artifact::from_raster(ArtifactType::FaceCrop, aligned.crop));
         out.emplace("session", Artifact::from_session(aligned.session));
         return out;
       }});
  algs.push_back({{"face_reintegrate",
                   Capability::FaceReintegrate,
                   true,
                   {{"face", kPerson, true}, {"session", ArtifactType::AlignSession, true}},
                   {{"out", kPerson}},
                   {{"feather", {"number", kDefaultFeather}}}},
                  [](const PortMap &in, const json &params) {
                    const auto session = in.at("session").session();
                    return single(reintegrate(in.at("face").raster(), session, session.original,
                                              params.at("feather").get<double>()));
                  }});
  return algs;
}

} // namespace

AlgorithmCatalog AlgorithmCatalog::with_builtins() {
  AlgorithmCatalog c;
  for (auto &a : builtin_algorithms()) c.add(std::move(a));
  return c;
}

void AlgorithmCatalog::add(Algorithm algorithm) {
  auto id = algorithm.descriptor.algorithm_id;
  algorithms_.insert_or_assign(std::move(id), std::move(algorithm));
}

const Algorithm *AlgorithmCatalog::find(std::string_view algorithm_id) const {
  auto it = algorithms_.find(algorithm_id);
  return it == algorithms_.end() ? nullptr : &it->second;
}

std::set<std::string> AlgorithmCatalog::ids() const {
  std::set<std::string> out;
  for (const auto &[id, a] : algorithms_) out.insert(id);
  return out;
}

PortMap AlgorithmCatalog::invoke_local(std::string_view algorithm_id, const PortMap &inputs,
                                       const json &params) const {
  const Algorithm *alg = find(algorithm_id);
  if (!alg) throw Error(ErrorCode::UnknownAlgorithm, "unknown algorithm '" + std::string(algorithm_id) + "'");
  check_inputs(alg->descriptor.inputs, inputs);
  const json resolved = resolve_params(alg->descriptor.parameters, params);
  return alg->run(inputs, resolved);
}

std::vector<ServiceDescriptor> builtin_services() {
  std::vector<ServiceDescriptor> out;
  for (const auto &a : builtin_algorithms()) {
    const auto &d = a.descriptor;
    out.push_back({d.algorithm_id, d.capability, d.inputs, d.outputs,
                   BackendBinding{LocalBinding{d.algorithm_id}}, "1"});
  }
  return out;
}

BackendInvoker::BackendInvoker(std::shared_ptr<const AlgorithmCatalog> catalog)
    : catalog_(std::move(catalog)) {}

PortMap BackendInvoker::invoke(const ServiceDescriptor &service, const PortMap &inputs,
                               const json &params) const {
  std::shared_ptr<std::mutex> exclusive;
  if (service.backend.exclusive) {
    std::lock_guard lock(exclusive_mutex_);
    auto &slot = exclusive_locks_[service.service_id];
    if (!slot) slot = std::make_shared<std::mutex>();
    exclusive = slot;
  }
  std::unique_lock<std::mutex> hold;
  if (exclusive) hold = std::unique_lock(*exclusive);

  if (service.backend.is_local())
    return catalog_->invoke_local(service.backend.local().algorithm_id, inputs, params);
  return invoke_remote(service.backend.remote(), service.capability, inputs, params);
}

} // namespace kolflow
