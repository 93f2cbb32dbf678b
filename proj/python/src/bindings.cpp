#include "lipmap/bounds.hpp"
#include "lipmap/diagnostics.hpp"
#include "lipmap/distribution.hpp"
#include "lipmap/flow.hpp"
#include "lipmap/jobs.hpp"
#include "lipmap/potentials.hpp"
#include "lipmap/semigroup.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace lipmap;

namespace {

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::dict info_dict(const PotentialInfo& info) {
  py::dict d;
  d["curvature_lower"] = info.curvature_lower;
  d["oscillation"] = info.oscillation ? py::object(py::float_(*info.oscillation)) : py::none();
  d["grad_sup_norm"] = info.grad_sup_norm ? py::object(py::float_(*info.grad_sup_norm)) : py::none();
  return d;
}

FlowConfig make_flow(double t_max, const std::string& method, int steps, double rel_tol, double abs_tol,
                     const std::string& route) {
  FlowConfig c;
  c.t_max = t_max;
  c.stepper.steps = steps;
  c.stepper.rel_tol = rel_tol;
  c.stepper.abs_tol = abs_tol;
  if (method == "rk4")
    c.stepper.method = StepMethod::Rk4;
  else if (method == "dormand_prince")
    c.stepper.method = StepMethod::DormandPrince;
  else
    throw Error(ErrorCode::BadParams, "unknown step method '" + method + "'");
  if (route == "auto")
    c.route = HessianRoute::Auto;
  else if (route == "commute")
    c.route = HessianRoute::Commute;
  else if (route == "hermite")
    c.route = HessianRoute::Hermite;
  else
    throw Error(ErrorCode::BadParams, "unknown hessian route '" + route + "'");
  return c;
}

}  // namespace

PYBIND11_MODULE(_lipmap, m) {
  m.doc() = "Lipschitz transport maps along the Ornstein-Uhlenbeck heat flow.";

  static auto* error = new py::exception<Error>(m, "LipmapError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error->ptr())(e.what());
      exc.attr("code") = to_string(e.code());
      py::set_error(*error, exc);
    }
  });

  py::class_<Potential>(m, "Potential")
      .def_property_readonly("dim", &Potential::dim)
      .def_property_readonly("name", &Potential::name)
      .def_property_readonly("shift", &Potential::shift)
      .def_property_readonly("normalized", &Potential::normalized)
      .def_property_readonly("normalization_error", &Potential::normalization_error)
      .def_property_readonly("info", [](const Potential& p) { return info_dict(p.info()); })
      .def("value", [](const Potential& p, double x) { return p.value(x); }, py::arg("x"))
      .def("value", [](const Potential& p, const Vector& x) { return p.value(x); }, py::arg("x"))
      .def("gradient", [](const Potential& p, const Vector& x) { return p.gradient(x); }, py::arg("x"))
      .def("hessian", [](const Potential& p, const Vector& x) { return p.hessian(x); }, py::arg("x"))
      .def("density", [](const Potential& p, double x) { return p.density(x); }, py::arg("x"))
      .def("density", [](const Potential& p, const Vector& x) { return p.density(x); }, py::arg("x"))
      .def("__repr__", [](const Potential& p) { return "<Potential " + p.name() + ">"; });

  m.def("gaussian", [](double rho, int dim) { return builtin(GaussianFamily{rho, dim}); }, py::arg("rho"),
        py::arg("dim") = 1);
  m.def(
      "bump", [](const Vector& center, double radius, double height) { return builtin(BumpFamily{center, radius, height}); },
      py::arg("center"), py::arg("radius") = 1.0, py::arg("height") = 0.5);
  m.def("linear_tail", [](double c0) { return builtin(LinearTailFamily{c0}); }, py::arg("c0") = 0.0);
  m.def("vt_counterexample", [](double T) { return builtin(VtFamily{T}); }, py::arg("T"));
  m.def("sharpness", [](double T, double scale) { return builtin(SharpnessFamily{T, scale}); }, py::arg("T"),
        py::arg("scale") = 1.0);
  m.def("tabulated", [](std::vector<double> grid, std::vector<double> values) {
    return tabulated_1d(std::move(grid), std::move(values));
  }, py::arg("grid"), py::arg("values"));
  m.def("normalize", [](const Potential& p) { return normalize(p); }, py::arg("potential"));
  m.def("mollify", &mollify, py::arg("potential"), py::arg("sigma"), py::arg("nodes") = 128);
  m.def("lipschitz_regularize", [](const Potential& p, double l, double r) { return lipschitz_regularize(p, l, r); },
        py::arg("potential"), py::arg("l"), py::arg("r"));
  m.def("caffarelli_reduction", [](const Potential& p) {
    const CaffarelliReduction c = caffarelli_reduction(p);
    return py::make_tuple(c.potential, c.dilation);
  }, py::arg("potential"));

  py::class_<SemigroupEvaluator>(m, "Semigroup")
      .def(py::init([](const Potential& p) { return SemigroupEvaluator(p); }), py::arg("potential"))
      .def("pt_f", [](const SemigroupEvaluator& s, const Vector& x, double t) { return s.pt_f(x, t); })
      .def("log_pt_f", [](const SemigroupEvaluator& s, const Vector& x, double t) { return s.log_pt_f(x, t); })
      .def("grad_pt_f", [](const SemigroupEvaluator& s, const Vector& x, double t) { return s.grad_pt_f(x, t); })
      .def("drift", [](const SemigroupEvaluator& s, const Vector& x, double t) { return s.drift(x, t); })
      .def("potential_hessian",
           [](const SemigroupEvaluator& s, const Vector& x, double t) { return s.potential_hessian(x, t); })
      .def("log_concavity", [](const SemigroupEvaluator& s, const Vector& x, double t) { return s.log_concavity(x, t); });

  py::class_<FlowIntegrator>(m, "Flow")
      .def(py::init([](const Potential& p, double t_max, const std::string& method, int steps, double rel_tol,
                       double abs_tol, const std::string& route) {
             return FlowIntegrator(SemigroupEvaluator(p), make_flow(t_max, method, steps, rel_tol, abs_tol, route));
           }),
           py::arg("potential"), py::arg("t_max") = 12.0, py::arg("method") = "rk4", py::arg("steps") = 600,
           py::arg("rel_tol") = 1e-9, py::arg("abs_tol") = 1e-9, py::arg("route") = "auto")
      .def_property_readonly("truncation_bound", &FlowIntegrator::truncation_bound)
      .def("transport", [](const FlowIntegrator& f, const Vector& y) {
        const TransportResult r = f.inverse_transport(y);
        py::dict d;
        d["point"] = r.point;
        d["error_bound"] = r.error_bound;
        d["certified"] = r.certified;
        d["steps"] = r.steps;
        return d;
      }, py::arg("y"))
      .def("jacobian", [](const FlowIntegrator& f, const Vector& y) {
        const JacobianResult r = f.jacobian_along_flow(y);
        py::dict d;
        d["point"] = r.point;
        d["jacobian"] = r.jacobian;
        d["lipschitz"] = r.lipschitz;
        d["certified"] = r.certified;
        return d;
      }, py::arg("y"))
      .def("trajectory", [](const FlowIntegrator& f, const Vector& x, double t0, double t1) {
        const TrajectoryRecord r = f.forward_flow(x, t0, t1);
        Matrix states(x.size(), static_cast<Eigen::Index>(r.states.size()));
        for (std::size_t i = 0; i < r.states.size(); ++i) states.col(static_cast<Eigen::Index>(i)) = r.states[i];
        return py::make_tuple(r.times, states);
      }, py::arg("x"), py::arg("t0"), py::arg("t1"))
      .def("samples", [](const FlowIntegrator& f, long count, std::uint64_t seed, bool with_jacobian, int threads) {
        SampleSet s;
        {
          py::gil_scoped_release release;
          s = f.pushforward_samples(count, seed, with_jacobian, threads);
        }
        std::vector<double> norms;
        for (const SamplePair& p : s.pairs) norms.push_back(p.jacobian_norm);
        py::dict d;
        d["inputs"] = s.inputs();
        d["outputs"] = s.outputs();
        d["jacobian_norms"] = norms;
        d["failures"] = s.failures.size();
        d["certified"] = s.certified;
        return d;
      }, py::arg("count"), py::arg("seed") = 42, py::arg("with_jacobian") = false, py::arg("threads") = 0);

  m.def("lemma5_lambda", &lemma5_lambda, py::arg("lam"), py::arg("t"));
  m.def("lemma6_lambda", &lemma6_lambda, py::arg("c"), py::arg("t"));
  m.def("switch_time", &switch_time, py::arg("lam"));
  m.def("closed_form_integrals", [](double lam, double c, double s) {
    const HeadTail h = closed_form_integrals(lam, c, s);
    return py::make_tuple(h.head, h.tail);
  }, py::arg("lam"), py::arg("c"), py::arg("s"));
  m.def("lipschitz_bound", [](double lam, double c) {
    const LipschitzBound b = lipschitz_bound(lam, c);
    return py::make_tuple(b.l_tight, b.l_theorem);
  }, py::arg("lam"), py::arg("c"));
  m.def("km_lipschitz", [](double lam, double c) { return km_lipschitz(combined_profile(lam, c)); }, py::arg("lam"),
        py::arg("c"));

  m.def("monotone_rearrangement", &monotone_rearrangement_1d, py::arg("potential"), py::arg("q"));
  m.def("ks_distance", [](const std::vector<double>& samples, const Potential& p) {
    return ks_distance(samples, Distribution1d(p));
  }, py::arg("samples"), py::arg("potential"));
  m.def("empirical_lipschitz", [](const Matrix& inputs, const Matrix& outputs) {
    return empirical_lipschitz(inputs, outputs).value;
  }, py::arg("inputs"), py::arg("outputs"));
  m.def("sharpness_check", [](double T, double t) { return to_python(to_json(sharpness_check(T, t))); }, py::arg("T"),
        py::arg("t"));
  m.def("vt_check", [](double T, double l) { return to_python(to_json(vt_counterexample_check(T, l))); }, py::arg("T"),
        py::arg("l"));

  m.def("run_job", [](const std::string& command, const std::filesystem::path& config, const std::filesystem::path& out,
                      bool quick, std::optional<std::uint64_t> seed) {
    py::gil_scoped_release release;
    return run_job_file(command, config, out, quick, seed);
  }, py::arg("command"), py::arg("config"), py::arg("out") = ".", py::arg("quick") = false, py::arg("seed") = py::none());
}
