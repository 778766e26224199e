#include "kolflow/engine.hpp"
#include "kolflow/face_align.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using nlohmann::json;

namespace {

json parse(const std::string &text) {
  auto doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw kolflow::Error(kolflow::ErrorCode::BadRequest, "argument is not valid JSON");
  return doc;
}

kolflow::ArtifactType artifact_type(const std::string &name) {
  return kolflow::artifact_type_or_throw(name, kolflow::ErrorCode::BadRequest);
}

/// Builds kolflow.KolflowError(code, message, details_json) from the
/// Python side of the package.
void translate(const kolflow::Error &e) {
  auto cls = py::module_::import("kolflow._errors").attr("KolflowError");
  const auto details = e.details().is_null() ? std::string() : e.details().dump();
  auto instance = cls(std::string(kolflow::api_code(e.code())), e.what(), details);
  PyErr_SetObject(cls.ptr(), instance.ptr());
}

class PyEngine {
public:
  PyEngine(const std::string &store_root, bool with_mocks, std::optional<std::string> registry_snapshot) {
    kolflow::EngineConfig config;
    config.store_root = store_root;
    config.with_mocks = with_mocks;
    if (registry_snapshot) config.registry_snapshot = *registry_snapshot;
    engine_ = std::make_unique<kolflow::Engine>(config);
  }

  std::string list_services(std::optional<std::string> capability) const {
    std::optional<kolflow::Capability> filter;
    if (capability) filter = kolflow::capability_or_throw(*capability);
    json out = json::array();
    for (const auto &d : engine_->registry().list_services(filter)) out.push_back(kolflow::to_json(d));
    return out.dump();
  }

  std::string register_service(const std::string &descriptor) {
    return engine_->register_service(kolflow::descriptor_from_json(parse(descriptor)));
  }

  std::string unregister_service(const std::string &service_id) {
    return kolflow::to_json(engine_->unregister_service(service_id)).dump();
  }

  std::string synthesize(const std::string &query) const {
    return engine_->synthesize(kolflow::CapabilityQuery::from_json(parse(query))).to_document().dump();
  }

  std::string validate(const std::string &spec) const {
    return kolflow::to_json(engine_->validate(kolflow::PipelineSpec::from_json(parse(spec)))).dump();
  }

  std::string put(const std::string &type, const py::bytes &payload) const {
    const std::string raw = payload;
    const auto bytes = std::span(reinterpret_cast<const std::uint8_t *>(raw.data()), raw.size());
    return engine_->put(kolflow::Artifact::decode(artifact_type(type), bytes)).str();
  }

  py::bytes get(const std::string &ref) const {
    const auto artifact = engine_->store().get(kolflow::ArtifactRef::parse(ref));
    const auto payload = artifact.payload();
    return py::bytes(reinterpret_cast<const char *>(payload.data()), payload.size());
  }

  std::string run(const std::string &spec, std::size_t max_parallel, bool fail_fast, bool memoize) {
    const auto parsed = kolflow::PipelineSpec::from_json(parse(spec));
    py::gil_scoped_release release;
    return engine_->executor().execute_run(parsed, {max_parallel, fail_fast, memoize}).to_json().dump();
  }

  std::string start_run(const std::string &spec, std::size_t max_parallel, bool fail_fast, bool memoize) {
    return engine_->executor().start_run(kolflow::PipelineSpec::from_json(parse(spec)),
                                         {max_parallel, fail_fast, memoize});
  }

  std::string status(const std::string &run_id) const {
    return engine_->executor().run_status(run_id).to_json().dump();
  }

  std::string wait(const std::string &run_id) const {
    py::gil_scoped_release release;
    return engine_->executor().wait(run_id).to_json().dump();
  }

  std::string cancel(const std::string &run_id) {
    py::gil_scoped_release release;
    return engine_->executor().cancel_run(run_id).to_json().dump();
  }

private:
  std::unique_ptr<kolflow::Engine> engine_;
};

std::vector<kolflow::Point2> points(const std::vector<std::pair<double, double>> &xy) {
  std::vector<kolflow::Point2> out;
  for (const auto &[x, y] : xy) out.push_back({x, y});
  return out;
}

} // namespace

PYBIND11_MODULE(_kolflow, m) {
  m.doc() = "Native core of the kolflow pipeline engine";
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const kolflow::Error &e) {
      translate(e);
    }
  });

  py::class_<PyEngine>(m, "Engine")
      .def(py::init<const std::string &, bool, std::optional<std::string>>(), py::arg("store_root"),
           py::arg("with_mocks") = false, py::arg("registry_snapshot") = py::none())
      .def("list_services", &PyEngine::list_services, py::arg("capability") = py::none())
      .def("register_service", &PyEngine::register_service)
      .def("unregister_service", &PyEngine::unregister_service)
      .def("synthesize", &PyEngine::synthesize)
      .def("validate", &PyEngine::validate)
      .def("put", &PyEngine::put)
      .def("get", &PyEngine::get)
      .def("run", &PyEngine::run)
      .def("start_run", &PyEngine::start_run)
      .def("status", &PyEngine::status)
      .def("wait", &PyEngine::wait)
      .def("cancel", &PyEngine::cancel);

  m.def("topological_order", &kolflow::topological_order, py::arg("nodes"), py::arg("edges"));

  m.def(
      "estimate_similarity",
      [](const std::vector<std::pair<double, double>> &source, const std::vector<std::pair<double, double>> &target) {
        const auto est = kolflow::estimate_similarity(points(source), points(target));
        return py::dict(py::arg("scale") = est.transform.scale, py::arg("rotation") = est.transform.rotation,
                        py::arg("tx") = est.transform.tx, py::arg("ty") = est.transform.ty,
                        py::arg("residual") = est.residual);
      },
      py::arg("source"), py::arg("target"));
}
