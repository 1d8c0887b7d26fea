#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "besovnet/approx.hpp"
#include "besovnet/bspline.hpp"
#include "besovnet/classifier.hpp"
#include "besovnet/error.hpp"
#include "besovnet/manifold.hpp"
#include "besovnet/serialize.hpp"
#include "besovnet/suites.hpp"

namespace py = pybind11;
using namespace besovnet;
using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }
nlohmann::json from_py(const py::object& o) {
  if (o.is_none()) return nlohmann::json::object();
  if (py::isinstance<py::str>(o)) return nlohmann::json::parse(o.cast<std::string>());
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

// (n, D) array -> flat row-major copy
std::vector<double> points(const Array& a, std::size_t D) {
  if (a.ndim() == 1 && static_cast<std::size_t>(a.shape(0)) == D)
    return {a.data(), a.data() + D};
  if (a.ndim() != 2 || static_cast<std::size_t>(a.shape(1)) != D)
    throw ShapeError("points must have shape (n, " + std::to_string(D) + ")");
  return {a.data(), a.data() + a.size()};
}

Array vec(std::vector<double> v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

struct PyNetwork {
  AnyNetwork net;

  std::string kind() const {
    return std::visit([](const auto& n) -> std::string {
      using T = std::decay_t<decltype(n)>;
      if constexpr (std::is_same_v<T, MlpNetwork>) return "mlp";
      else if constexpr (std::is_same_v<T, CnnNetwork>) return "cnn";
      else return "resnet";
    }, net);
  }
  std::size_t input_dim() const {
    return std::visit([](const auto& n) -> std::size_t {
      if constexpr (std::is_same_v<std::decay_t<decltype(n)>, MlpNetwork>) return n.input_dim();
      else return n.input_rows();
    }, net);
  }
  Array eval(const Array& a) const {
    const std::size_t D = input_dim();
    const auto x = points(a, D);
    std::vector<double> y;
    {
      py::gil_scoped_release nogil;
      if (auto* m = std::get_if<MlpNetwork>(&net)) {
        for (std::size_t i = 0; i < x.size(); i += D) {
          const auto o = eval_mlp(*m, std::span<const double>(x).subspan(i, D));
          y.insert(y.end(), o.begin(), o.end());
        }
      } else if (auto* c = std::get_if<CnnNetwork>(&net)) {
        y = eval_cnn_batch(*c, x);
      } else {
        y = eval_resnet_batch(std::get<ConvResNet>(net), x);
      }
    }
    return vec(std::move(y));
  }
  std::string dumps() const { return std::visit([](const auto& n) { return serialize(n).dump(); }, net); }
  py::dict audit_dict() const {
    const auto a = std::visit([](const auto& n) { return audit(n); }, net);
    py::dict fields;
    for (const auto& f : a.fields)
      fields[py::str(f.name)] = py::dict(py::arg("measured") = f.measured, py::arg("declared") = f.declared,
                                         py::arg("pass") = f.pass);
    return py::dict(py::arg("pass") = a.pass(), py::arg("fields") = fields);
  }
};

struct PyManifold {
  SyntheticManifold M;
};

struct PyTarget {
  TargetFunction f;
  std::size_t D;
};

BuildOptions options(double eps, std::uint64_t seed, std::size_t samples) {
  BuildOptions o;
  o.eps = eps;
  o.seed = seed;
  o.samples = samples;
  o.strict = false;
  return o;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "besovnet core bindings";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);

  py::class_<PyManifold>(m, "Manifold")
      .def(py::init([](const std::string& kind, std::size_t D, py::object params) {
             ManifoldParams p;
             const auto j = from_py(params);
             if (j.contains("radius")) p.radius = j["radius"].get<double>();
             if (j.contains("major")) p.major = j["major"].get<double>();
             if (j.contains("side")) p.side = j["side"].get<double>();
             if (j.contains("d")) p.d = j["d"].get<std::size_t>();
             return PyManifold{make_manifold(parse_manifold_kind(kind), D, p)};
           }),
           py::arg("kind"), py::arg("D"), py::arg("params") = py::none())
      .def_property_readonly("d", [](const PyManifold& s) { return s.M.d; })
      .def_property_readonly("D", [](const PyManifold& s) { return s.M.D; })
      .def_property_readonly("reach", [](const PyManifold& s) { return s.M.tau; })
      .def("sample", [](const PyManifold& s, std::size_t n, std::uint64_t seed) {
             const auto pts = sample(s.M, n, seed);
             Array out({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(s.M.D)});
             double* o = out.mutable_data();
             for (const auto& p : pts) o = std::copy(p.begin(), p.end(), o);
             return out;
           }, py::arg("n"), py::arg("seed") = 0)
      .def("to_dict", [](const PyManifold& s) { return to_py(to_json(s.M)); });

  py::class_<PyTarget>(m, "Target")
      .def(py::init([](const PyManifold& M, const std::string& family, py::object params, std::uint64_t seed) {
             return PyTarget{make_target(M.M, family, from_py(params), seed), M.M.D};
           }),
           py::arg("manifold"), py::arg("family"), py::arg("params") = py::none(), py::arg("seed") = 0)
      .def_property_readonly("family", [](const PyTarget& t) { return t.f.family; })
      .def_property_readonly("smoothness", [](const PyTarget& t) { return t.f.s; })
      .def("__call__", [](const PyTarget& t, const Array& a) {
        const auto x = points(a, t.D);
        std::vector<double> y;
        for (std::size_t i = 0; i < x.size(); i += t.D) y.push_back(t.f(std::span<const double>(x).subspan(i, t.D)));
        return vec(std::move(y));
      });

  py::class_<PyNetwork>(m, "Network")
      .def_property_readonly("kind", &PyNetwork::kind)
      .def_property_readonly("input_dim", &PyNetwork::input_dim)
      .def("__call__", &PyNetwork::eval, py::arg("points"))
      .def("to_json", &PyNetwork::dumps)
      .def("audit", &PyNetwork::audit_dict);

  m.def("load_network", [](py::object doc) { return PyNetwork{deserialize(from_py(doc))}; }, py::arg("document"),
        "Parse a network document (str or dict).");

  m.def("build", [](const PyTarget& f, const PyManifold& M, double eps, std::uint64_t seed, std::size_t samples) {
          std::optional<Theorem1Result> r;
          {
            py::gil_scoped_release nogil;
            r = build_theorem1_network(f.f, M.M, options(eps, seed, samples));
          }
          return py::make_tuple(PyNetwork{std::move(r->network)}, to_py(r->report.to_json()));
        },
        py::arg("target"), py::arg("manifold"), py::arg("eps") = 0.1, py::arg("seed") = 0, py::arg("samples") = 10000,
        "Build a residual network approximating the target on the manifold; returns (network, report).");

  m.def("build_classifier", [](const PyTarget& eta, const PyManifold& M, double F, double eps, std::uint64_t seed,
                               std::size_t samples) {
          const auto model = make_label_model(M.M, eta.f);
          std::optional<ClassifierResult> r;
          {
            py::gil_scoped_release nogil;
            r = build_classifier_network(model, F, eps, options(eps, seed, samples), false);
          }
          return py::make_tuple(PyNetwork{std::move(r->network)}, to_py(r->certificate.to_json()));
        },
        py::arg("eta"), py::arg("manifold"), py::arg("F") = 2.0, py::arg("eps") = 1e-2, py::arg("seed") = 0,
        py::arg("samples") = 10000, "Build the truncated log-odds classifier; returns (network, certificate).");

  m.def("covering_bound", [](double M, double L, double J, double K, double kappa1, double kappa2, double D, double delta) {
          return to_py(covering_bound({M, L, J, K, kappa1, kappa2, D, delta}).to_json());
        },
        py::arg("M"), py::arg("L"), py::arg("J"), py::arg("K"), py::arg("kappa1"), py::arg("kappa2"), py::arg("D"),
        py::arg("delta"));

  m.def("fit_bspline", [](const std::function<double(std::vector<double>)>& f, std::size_t N, std::size_t d, double s,
                          double p, double q, int order) {
          const auto plan = make_plan(N, d, s, p, q, order);
          const auto fit = fit_coefficients([&](std::span<const double> x) { return f({x.begin(), x.end()}); }, plan);
          return to_py(to_json(fit));
        },
        py::arg("f"), py::arg("N"), py::arg("d") = 1, py::arg("s") = 2.0, py::arg("p") = 2.0, py::arg("q") = 2.0,
        py::arg("order") = 3, "Sparse-grid quasi-interpolant of f on [0,1]^d; returns its summary.");

  m.def("suite_names", &suite_names);
  m.def("run_suite", [](const std::string& name, std::uint64_t seed) {
          std::optional<SuiteResult> r;
          {
            py::gil_scoped_release nogil;
            r = besovnet::run_suite(name, seed);
          }
          return to_py(r->to_json());
        },
        py::arg("name"), py::arg("seed") = 0);
}
