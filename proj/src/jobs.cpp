#include "lipmap/jobs.hpp"

#include "lipmap/bounds.hpp"
#include "lipmap/diagnostics.hpp"
#include "lipmap/distribution.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

namespace lipmap {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::Config, what); }

double num(const json& j, const char* key, double def) {
  if (!j.is_object() || !j.contains(key)) return def;
  if (!j.at(key).is_number()) config_error(std::string("'") + key + "' must be a number");
  return j.at(key).get<double>();
}

long integer(const json& j, const char* key, long def) {
  if (!j.is_object() || !j.contains(key)) return def;
  if (!j.at(key).is_number_integer()) config_error(std::string("'") + key + "' must be an integer");
  return j.at(key).get<long>();
}

std::vector<double> numbers(const json& j, const char* key, std::vector<double> def) {
  if (!j.is_object() || !j.contains(key)) return def;
  if (!j.at(key).is_array()) config_error(std::string("'") + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& v : j.at(key)) {
    if (!v.is_number()) config_error(std::string("'") + key + "' must be an array of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_output(const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw Error(ErrorCode::Config, "cannot write " + (dir / name).string());
  return out;
}

void write_json(const std::filesystem::path& dir, const std::string& name, const json& j) {
  auto out = open_output(dir, name);
  out << j.dump(2) << '\n';
}

void csv_header(std::ostream& os, const JobConfig& cfg) {
  os << "# lipmap " << LIPMAP_VERSION << ' ' << cfg.command << '\n';
  os << "# config: " << cfg.raw.dump() << '\n';
}

json describe(const Potential& p) {
  json j;
  j["name"] = p.name();
  j["dim"] = p.dim();
  j["curvature_lower"] = std::isfinite(p.info().curvature_lower) ? json(p.info().curvature_lower) : json(nullptr);
  j["oscillation"] = p.info().oscillation ? json(*p.info().oscillation) : json(nullptr);
  j["grad_sup_norm"] = p.info().grad_sup_norm ? json(*p.info().grad_sup_norm) : json(nullptr);
  j["normalized"] = p.normalized();
  j["shift"] = p.shift();
  return j;
}

GridSpec grid_from_json(const json& spec, int dim, double lo, double hi, int n) {
  const json g = spec.is_object() && spec.contains("grid") ? spec.at("grid") : json::object();
  return GridSpec::uniform(dim, num(g, "lower", lo), num(g, "upper", hi), static_cast<int>(integer(g, "points", n)));
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

JobConfig make_job_config(json raw, const std::string& command, bool quick, std::optional<std::uint64_t> seed) {
  if (!raw.is_object()) config_error("job configuration must be a JSON object");
  JobConfig cfg;
  cfg.command = command;
  if (cfg.command.empty()) {
    if (!raw.contains("command") || !raw.at("command").is_string()) config_error("no command given");
    cfg.command = raw.at("command").get<std::string>();
  }
  cfg.quick = quick || (raw.contains("quick") && raw.at("quick").is_boolean() && raw.at("quick").get<bool>());
  if (seed) {
    cfg.seed = *seed;
  } else if (raw.contains("seed")) {
    if (!raw.at("seed").is_number_unsigned()) config_error("'seed' must be a non-negative integer");
    cfg.seed = raw.at("seed").get<std::uint64_t>();
  }
  raw["command"] = cfg.command;
  raw["seed"] = cfg.seed;
  raw["quick"] = cfg.quick;
  raw["version"] = LIPMAP_VERSION;
  cfg.raw = std::move(raw);
  return cfg;
}

JobConfig load_job_config(const std::filesystem::path& file, const std::string& command, bool quick,
                          std::optional<std::uint64_t> seed) {
  std::ifstream in(file);
  if (!in) config_error("cannot read " + file.string());
  json raw;
  try {
    raw = json::parse(in);
  } catch (const json::exception& e) {
    config_error(std::string("invalid JSON: ") + e.what());
  }
  return make_job_config(std::move(raw), command, quick, seed);
}

QuadratureScheme scheme_from_json(const json& spec, bool quick) {
  QuadratureScheme s;
  if (spec.is_null()) {
    if (quick) s.nodes = std::max(16, s.nodes / 10);
    return s;
  }
  if (!spec.is_object()) config_error("'scheme' must be an object");
  const std::string kind = spec.value("kind", std::string("gauss_hermite"));
  if (kind == "gauss_hermite") {
    s.kind = QuadratureScheme::Kind::GaussHermite;
  } else if (kind == "monte_carlo") {
    s.kind = QuadratureScheme::Kind::MonteCarlo;
  } else {
    config_error("unknown scheme kind '" + kind + "'");
  }
  s.nodes = static_cast<int>(integer(spec, "nodes", s.nodes));
  s.samples = integer(spec, "samples", s.samples);
  s.seed = static_cast<std::uint64_t>(integer(spec, "seed", static_cast<long>(s.seed)));
  s.max_tensor_dim = static_cast<int>(integer(spec, "max_tensor_dim", s.max_tensor_dim));
  if (quick) {
    s.nodes = std::max(16, s.nodes / 10);
    s.samples = std::max(1000L, s.samples / 10);
  }
  return s;
}

FlowConfig flow_from_json(const json& spec, bool quick) {
  FlowConfig f;
  if (!spec.is_null()) {
    if (!spec.is_object()) config_error("'flow' must be an object");
    f.t_max = num(spec, "t_max", f.t_max);
    const std::string method = spec.value("method", std::string("rk4"));
    if (method == "rk4") {
      f.stepper.method = StepMethod::Rk4;
    } else if (method == "dormand_prince") {
      f.stepper.method = StepMethod::DormandPrince;
    } else {
      config_error("unknown flow method '" + method + "'");
    }
    f.stepper.steps = static_cast<int>(integer(spec, "steps", f.stepper.steps));
    f.stepper.abs_tol = num(spec, "abs_tol", f.stepper.abs_tol);
    f.stepper.rel_tol = num(spec, "rel_tol", f.stepper.rel_tol);
    f.stepper.max_steps = integer(spec, "max_steps", f.stepper.max_steps);
    const std::string route = spec.value("hessian_route", std::string("auto"));
    if (route == "auto") {
      f.route = HessianRoute::Auto;
    } else if (route == "commute") {
      f.route = HessianRoute::Commute;
    } else if (route == "hermite") {
      f.route = HessianRoute::Hermite;
    } else {
      config_error("unknown hessian_route '" + route + "'");
    }
  }
  if (quick) {
    f.stepper.steps = std::max(60, f.stepper.steps / 10);
    f.stepper.abs_tol *= 10.0;
    f.stepper.rel_tol *= 10.0;
  }
  return f;
}

Potential potential_from_json(const json& spec, const QuadratureScheme& scheme) {
  if (!spec.is_object()) config_error("'potential' must be an object");
  std::optional<Potential> p;
  if (spec.contains("table")) {
    const json& t = spec.at("table");
    p = tabulated_1d(numbers(t, "grid", {}), numbers(t, "values", {}));
  } else if (spec.contains("family")) {
    const std::string family = spec.at("family").get<std::string>();
    const json params = spec.value("params", json::object());
    if (family == "gaussian") {
      p = builtin(GaussianFamily{num(params, "rho", 0.0), static_cast<int>(integer(params, "dim", 1))});
    } else if (family == "bump") {
      BumpFamily b;
      if (params.contains("center")) {
        const auto c = params.at("center").is_number() ? std::vector<double>{params.at("center").get<double>()}
                                                       : numbers(params, "center", {});
        b.center = Eigen::Map<const Vector>(c.data(), static_cast<Eigen::Index>(c.size()));
      } else {
        b.center = Vector::Zero(integer(params, "dim", 1));
      }
      b.radius = num(params, "radius", b.radius);
      b.height = num(params, "height", b.height);
      p = builtin(b);
    } else if (family == "linear_tail") {
      p = builtin(LinearTailFamily{num(params, "c0", 0.0)});
    } else if (family == "vt_counterexample") {
      p = builtin(VtFamily{num(params, "T", 4.0)});
    } else if (family == "sharpness") {
      const double T = num(params, "T", 6.0);
      p = params.contains("t") ? builtin(SharpnessFamily::at_time(T, num(params, "t", 0.0)))
                               : builtin(SharpnessFamily{T, num(params, "scale", 1.0)});
    } else {
      config_error("unknown potential family '" + family + "'");
    }
  } else {
    config_error("potential needs 'family' or 'table'");
  }

  if (spec.contains("regularize")) {
    const json& r = spec.at("regularize");
    LipschitzOptions opt;
    opt.points = static_cast<int>(integer(r, "points", opt.points));
    opt.points_2d = static_cast<int>(integer(r, "points_2d", opt.points_2d));
    opt.tolerance = num(r, "tolerance", opt.tolerance);
    p = lipschitz_regularize(*p, num(r, "l", 1.0), num(r, "r", 3.0), opt);
  }
  if (spec.contains("mollify")) p = mollify(*p, num(spec, "mollify", 0.1), scheme.nodes);

  PotentialInfo info = p->info();
  if (spec.contains("curvature_lower")) info.curvature_lower = num(spec, "curvature_lower", 0.0);
  if (spec.contains("oscillation")) {
    if (spec.at("oscillation").is_null()) {
      info.oscillation.reset();
    } else {
      info.oscillation = num(spec, "oscillation", 0.0);
    }
  }
  if (spec.contains("grad_sup_norm")) {
    if (spec.at("grad_sup_norm").is_null()) {
      info.grad_sup_norm.reset();
    } else {
      info.grad_sup_norm = num(spec, "grad_sup_norm", 0.0);
    }
  }
  Potential out = p->normalized() ? p->with_info(info).as_normalized(p->shift(), p->normalization_error())
                                  : p->with_info(info);
  const bool want_norm = spec.value("normalize", true);
  if (want_norm && !out.normalized()) out = normalize(out, scheme);
  return out;
}

// ---------------------------------------------------------------------------
// transport

int run_transport(const JobConfig& cfg, const std::filesystem::path& out) {
  const json& raw = cfg.raw;
  if (!raw.contains("potential")) config_error("transport needs a 'potential'");
  const QuadratureScheme scheme = scheme_from_json(raw.value("scheme", json()), cfg.quick);
  const Potential p = potential_from_json(raw.at("potential"), scheme);
  const FlowConfig flow = flow_from_json(raw.value("flow", json()), cfg.quick);
  long count = integer(raw, "samples", 10000);
  if (cfg.quick) count = std::max(10L, count / 10);
  const bool jacobian = raw.value("jacobian", true);

  const FlowIntegrator fi(SemigroupEvaluator(p, scheme), flow);
  const SampleSet set = fi.pushforward_samples(count, cfg.seed, jacobian);
  const int n = p.dim();

  {
    auto os = open_output(out, "samples.csv");
    csv_header(os, cfg);
    os << "index";
    for (int i = 0; i < n; ++i) os << ",input_" << i;
    for (int i = 0; i < n; ++i) os << ",output_" << i;
    os << ",jacobian_norm,error_bound\n";
    for (const auto& s : set.pairs) {
      os << s.index;
      for (int i = 0; i < n; ++i) os << ',' << fmt(s.input[i]);
      for (int i = 0; i < n; ++i) os << ',' << fmt(s.output[i]);
      os << ',' << fmt(s.jacobian_norm) << ',' << fmt(s.error_bound) << '\n';
    }
  }

  json summary;
  summary["config"] = raw;
  summary["potential"] = describe(p);
  summary["samples"] = count;
  summary["mapped"] = set.pairs.size();
  summary["partial"] = !set.failures.empty();
  summary["certified"] = set.certified;
  summary["truncation_bound"] = std::isfinite(fi.truncation_bound()) ? json(fi.truncation_bound()) : json(nullptr);
  json failures = json::array();
  for (const auto& f : set.failures) failures.push_back({{"index", f.index}, {"code", f.code}, {"message", f.message}});
  summary["failures"] = failures;

  bool pass = set.failures.empty();
  if (set.pairs.size() >= 2) {
    const Matrix outs = set.outputs();
    summary["ks"] = ks_distance(outs, p);
    const EmpiricalLipschitz el = empirical_lipschitz(set.inputs(), outs);
    summary["empirical_lipschitz"] = el.value;
    summary["duplicate_pairs"] = el.duplicates;
    double max_jac = 0.0;
    for (const auto& s : set.pairs)
      if (std::isfinite(s.jacobian_norm)) max_jac = std::max(max_jac, s.jacobian_norm);
    summary["max_jacobian_norm"] = jacobian ? json(max_jac) : json(nullptr);

    const double lambda = p.info().curvature_lower;
    std::optional<double> bound;
    if (lambda < 1.0) {
      bound = 1.0 / std::sqrt(1.0 - std::max(lambda, 0.0));
      summary["bound_route"] = "caffarelli_reduction";
    }
    if (p.info().oscillation && std::isfinite(lambda)) {
      const double c = *p.info().oscillation;
      const double lam = std::max(lambda, 1.0);
      const LipschitzBound lb = lipschitz_bound(lam, c);
      summary["theorem_bound"] = lb.l_theorem;
      summary["tight_bound"] = lb.l_tight;
      summary["km_bound"] = km_lipschitz(combined_profile(lam, c));
      if (!bound || lb.l_theorem < *bound) {
        bound = lb.l_theorem;
        summary["bound_route"] = "theorem";
      }
    }
    if (bound) {
      summary["lipschitz_bound"] = *bound;
      pass = pass && el.value <= *bound * (1.0 + 1e-6);
    } else {
      summary["lipschitz_bound"] = nullptr;
    }
  }
  summary["pass"] = pass;
  write_json(out, "summary.json", summary);
  if (!set.failures.empty()) return kExitNumericFailure;
  return pass ? kExitOk : kExitInvariantFailure;
}

// ---------------------------------------------------------------------------
// bound

int run_bound(const JobConfig& cfg, const std::filesystem::path& out) {
  const json spec = cfg.raw.value("bound", json::object());
  const double lambda = num(spec, "lambda", 1.0);
  const double c = num(spec, "c", 0.0);
  if (!(lambda >= 0.0) || !(c >= 0.0)) throw Error(ErrorCode::BadParams, "bound needs lambda >= 0 and c >= 0");
  json summary;
  summary["config"] = cfg.raw;
  summary["lambda"] = lambda;
  summary["c"] = c;
  bool ok = true;
  if (lambda < 1.0) {
    summary["route"] = "caffarelli_reduction";
    summary["dilation"] = 1.0 / std::sqrt(1.0 - lambda);
    summary["s"] = nullptr;
  } else {
    const double s = switch_time(lambda);
    const HeadTail ht = closed_form_integrals(lambda, c, s);
    const LipschitzBound lb = lipschitz_bound(lambda, c);
    const double km = km_lipschitz(combined_profile(lambda, c));
    summary["route"] = "theorem";
    summary["s"] = s;
    summary["head"] = ht.head;
    summary["tail"] = ht.tail;
    summary["l_tight"] = lb.l_tight;
    summary["l_theorem"] = lb.l_theorem;
    summary["km_numeric"] = km;
    ok = km <= lb.l_tight + 1e-6 && lb.l_tight <= lb.l_theorem;
    summary["ordering_ok"] = ok;
  }
  write_json(out, "summary.json", summary);
  return ok ? kExitOk : kExitInvariantFailure;
}

// ---------------------------------------------------------------------------
// profile

int run_profile(const JobConfig& cfg, const std::filesystem::path& out) {
  const json spec = cfg.raw.value("profile", json::object());
  const double lambda = num(spec, "lambda", 1.0);
  const double c = num(spec, "c", 0.0);
  const double t_lo = num(spec, "t_min", 0.01);
  const double t_hi = num(spec, "t_max", 5.0);
  long points = integer(spec, "points", 200);
  if (cfg.quick) points = std::max(10L, points / 10);
  if (!(t_hi > t_lo) || t_lo < 0.0 || points < 2) throw Error(ErrorCode::BadParams, "bad profile time grid");
  const LambdaProfile l5 = LambdaProfile::lemma5(lambda);
  const LambdaProfile l6 = LambdaProfile::lemma6(c);
  const LambdaProfile comb = LambdaProfile::combined(lambda, c);

  std::optional<SemigroupEvaluator> ev;
  GridSpec grid = GridSpec::uniform(1, -4.0, 4.0, 41);
  if (cfg.raw.contains("potential")) {
    const QuadratureScheme scheme = scheme_from_json(cfg.raw.value("scheme", json()), cfg.quick);
    ev.emplace(potential_from_json(cfg.raw.at("potential"), scheme), scheme);
    grid = grid_from_json(spec, ev->dim(), -4.0, 4.0, cfg.quick ? 11 : 41);
  }

  auto os = open_output(out, "profile.csv");
  csv_header(os, cfg);
  os << "t,lambda5,lambda6,combined" << (ev ? ",measured" : "") << '\n';
  for (long i = 0; i < points; ++i) {
    const double t = t_lo + (t_hi - t_lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    os << fmt(t) << ',' << fmt(l5(t)) << ',' << fmt(l6(t)) << ',' << fmt(comb(t));
    if (ev) os << ',' << fmt(ev->concavity_profile(grid, t));
    os << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// verify

namespace {

struct CheckContext {
  bool quick = false;
  std::uint64_t seed = 42;
  double tol_scale() const { return quick ? 10.0 : 1.0; }
};

json comparison(const std::string& name, double measured, double bound, double tol) {
  const BoundComparison b = compare(name, measured, bound, tol);
  return {{"name", b.name}, {"measured", b.measured}, {"bound", b.bound}, {"tolerance", b.tolerance}, {"pass", b.pass}};
}

json finish(json check, const json& comparisons) {
  bool pass = true;
  for (const auto& c : comparisons) pass = pass && c.at("pass").get<bool>();
  check["comparisons"] = comparisons;
  check["pass"] = pass;
  return check;
}

json check_metadata(const json& spec, const CheckContext& ctx, const QuadratureScheme& scheme) {
  const Potential p = potential_from_json(spec.at("potential"), scheme);
  const GridSpec grid = grid_from_json(spec, p.dim(), -6.0, 6.0, ctx.quick ? 61 : 601);
  const ValidationReport r = validate_metadata(p, grid);
  json cmp = json::array();
  cmp.push_back(comparison("curvature_violation", r.curvature_violation, 0.0, 1e-6));
  cmp.push_back(comparison("oscillation_violation", r.oscillation_violation, 0.0, 1e-6));
  cmp.push_back(comparison("gradient_violation", r.gradient_violation, 0.0, 1e-6));
  return finish({{"potential", describe(p)}, {"min_hessian_eigenvalue", r.min_hessian_eigenvalue},
                 {"measured_oscillation", r.measured_oscillation}},
                cmp);
}

json check_lemma5(const json& spec, const CheckContext& ctx, const QuadratureScheme& scheme) {
  const Potential p = potential_from_json(spec.at("potential"), scheme);
  const double lambda = p.info().curvature_lower;
  if (!std::isfinite(lambda)) config_error("lemma5 check needs a declared curvature_lower");
  const SemigroupEvaluator ev(p, scheme);
  const GridSpec grid = grid_from_json(spec, p.dim(), -4.0, 4.0, ctx.quick ? 9 : 41);
  json cmp = json::array();
  for (double t : numbers(spec, "times", {0.0, 0.1, 0.25, 0.5, 1.0, 2.0})) {
    if (lambda * -std::expm1(-2.0 * t) >= 0.9) continue;
    cmp.push_back(comparison("t=" + fmt(t), ev.concavity_profile(grid, t), lemma5_lambda(lambda, t), 1e-4 * ctx.tol_scale()));
  }
  return finish({{"potential", describe(p)}}, cmp);
}

json check_lemma6(const json& spec, const CheckContext& ctx, const QuadratureScheme& scheme) {
  const Potential p = potential_from_json(spec.at("potential"), scheme);
  if (!p.info().oscillation) config_error("lemma6 check needs a declared oscillation");
  const SemigroupEvaluator ev(p, scheme);
  const GridSpec grid = grid_from_json(spec, p.dim(), -4.0, 4.0, ctx.quick ? 9 : 41);
  json cmp = json::array();
  for (double t : numbers(spec, "times", {0.05, 0.1, 0.25, 0.5, 1.0, 2.0}))
    cmp.push_back(comparison("t=" + fmt(t), ev.concavity_profile(grid, t), lemma6_lambda(*p.info().oscillation, t),
                             1e-4 * ctx.tol_scale()));
  return finish({{"potential", describe(p)}}, cmp);
}

json check_drift(const json& spec, const CheckContext& ctx, const QuadratureScheme& scheme) {
  const Potential p = potential_from_json(spec.at("potential"), scheme);
  if (!p.info().grad_sup_norm) config_error("drift check needs a declared grad_sup_norm");
  const SemigroupEvaluator ev(p, scheme);
  const GridSpec grid = grid_from_json(spec, p.dim(), -6.0, 6.0, ctx.quick ? 25 : 241);
  json cmp = json::array();
  for (double t : numbers(spec, "times", {0.1, 0.5, 1.0, 2.0})) {
    double worst = 0.0;
    for (long k = 0; k < grid.size(); ++k) worst = std::max(worst, ev.drift(grid.point(k), t).norm());
    cmp.push_back(comparison("t=" + fmt(t), worst, std::exp(-t) * *p.info().grad_sup_norm, 1e-4 * ctx.tol_scale()));
  }
  return finish({{"potential", describe(p)}}, cmp);
}

json check_contraction(const json& spec, const CheckContext& ctx, const QuadratureScheme& scheme) {
  const Potential p = potential_from_json(spec.at("potential"), scheme);
  const SemigroupEvaluator ev(p, scheme);
  const GridSpec grid = grid_from_json(spec, p.dim(), -4.0, 4.0, ctx.quick ? 17 : 81);
  double fmax = 0.0, fmin = std::numeric_limits<double>::infinity();
  for (long k = 0; k < grid.size(); ++k) {
    const double f = p.density(grid.point(k));
    fmax = std::max(fmax, f);
    fmin = std::min(fmin, f);
  }
  json cmp = json::array();
  for (double t : numbers(spec, "times", {0.1, 0.5, 1.0, 2.0})) {
    double hi = 0.0, lo = std::numeric_limits<double>::infinity();
    for (long k = 0; k < grid.size(); ++k) {
      const double f = ev.pt_f(grid.point(k), t);
      hi = std::max(hi, f);
      lo = std::min(lo, f);
    }
    cmp.push_back(comparison("max t=" + fmt(t), hi, fmax, 1e-10 * ctx.tol_scale()));
    cmp.push_back(comparison("-min t=" + fmt(t), -lo, -fmin, 1e-10 * ctx.tol_scale()));
  }
  return finish({{"potential", describe(p)}}, cmp);
}

json check_oracle(const json& spec, const CheckContext& ctx, const QuadratureScheme& scheme) {
  const Potential p = potential_from_json(spec.at("potential"), scheme);
  if (p.dim() != 1) config_error("oracle check is one-dimensional");
  const FlowIntegrator fi(SemigroupEvaluator(p, scheme), flow_from_json(spec.value("flow", json()), ctx.quick));
  const MonotoneMap oracle(p);
  double worst = 0.0;
  const int q = ctx.quick ? 9 : 99;
  for (int i = 1; i <= q; ++i) {
    const double y = normal_quantile(static_cast<double>(i) / (q + 1));
    Vector yy(1);
    yy[0] = y;
    worst = std::max(worst, std::abs(fi.inverse_transport(yy).point[0] - oracle(y)));
  }
  json cmp = json::array();
  cmp.push_back(comparison("sup_difference", worst, 0.0, num(spec, "tolerance", 5e-3) * ctx.tol_scale()));
  return finish({{"potential", describe(p)}, {"quantiles", q}}, cmp);
}

json check_gaussian_transport(const json& spec, const CheckContext& ctx, const QuadratureScheme& scheme) {
  json cmp = json::array();
  const FlowConfig flow = flow_from_json(spec.value("flow", json()), ctx.quick);
  for (double rho : numbers(spec, "rho", {0.5, 1.0, 3.0})) {
    const Potential p = normalize(builtin(GaussianFamily{rho, 1}), scheme);
    const FlowIntegrator fi(SemigroupEvaluator(p, scheme), flow);
    double worst = 0.0;
    for (int i = 0; i <= 32; ++i) {
      Vector y(1);
      y[0] = -4.0 + 0.25 * i;
      worst = std::max(worst, std::abs(fi.inverse_transport(y).point[0] - y[0] / std::sqrt(1.0 + rho)));
    }
    cmp.push_back(comparison("rho=" + fmt(rho), worst, 0.0, 1e-3 * ctx.tol_scale()));
  }
  return finish(json::object(), cmp);
}

json check_sharpness(const json& spec, const CheckContext& ctx) {
  const double T = num(spec, "T", 20.0);
  const double t = num(spec, "t", 0.5 * std::log(2.0));
  const SharpnessResult a = sharpness_check(T, t);
  const SharpnessResult b = sharpness_check(2.0 * T, t);
  json cmp = json::array();
  cmp.push_back(comparison("ratio_deficit", 1.0 - a.ratio, 1.0 - num(spec, "min_ratio", 0.95), 0.0));
  cmp.push_back(comparison("growth_deficit", 3.8 * a.measured - b.measured, 0.0, 0.0));
  (void)ctx;
  return finish({{"T", to_json(a)}, {"2T", to_json(b)}}, cmp);
}

json check_vt(const json& spec, const CheckContext& ctx) {
  const double T = num(spec, "T", 6.0);
  const VtResult r = vt_counterexample_check(T, num(spec, "L", 1.0));
  json cmp = json::array();
  cmp.push_back(comparison("c_T", r.c_T, std::log(2.0), 0.0));
  cmp.push_back(comparison("mass_tail", r.mass_tail, 0.5, 0.0));
  cmp.push_back(comparison("density_rel_error", std::abs(r.density_at_T / r.density_formula - 1.0), 0.0,
                           1e-8 * ctx.tol_scale()));
  cmp.push_back(comparison("-mass_tail", -r.mass_tail, -r.gaussian_tail_lower, 0.0));
  json info = to_json(r);
  info["lower_bound_over_threshold"] = r.lipschitz_lower / r.threshold;
  return finish({{"result", info}}, cmp);
}

json check_linear_tail(const json& spec, const CheckContext& ctx, const QuadratureScheme& scheme) {
  json pspec = spec.value("potential", json{{"family", "linear_tail"}});
  const Potential p = potential_from_json(pspec, scheme);
  const TailFit f = tail_test(p, num(spec, "x_lo", 2.0), num(spec, "x_hi", 6.0));
  json cmp = json::array();
  cmp.push_back(comparison("slope_error", std::abs(f.linear_slope + 1.0), 0.0, 0.1 * ctx.tol_scale()));
  cmp.push_back(comparison("not_flagged", f.incompatible_with_gaussian_pushforward ? 0.0 : 1.0, 0.0, 0.0));
  return finish({{"fit", to_json(f)}}, cmp);
}

json check_bounds(const json& spec, const CheckContext&) {
  json cmp = json::array();
  for (double lambda : numbers(spec, "lambda", {1.0, 2.0, 4.0, 8.0, 16.0})) {
    for (double c : numbers(spec, "c", {0.0, 0.5, 1.0, 1.5, 2.0})) {
      const LipschitzBound lb = lipschitz_bound(lambda, c);
      const std::string tag = "(" + fmt(lambda) + "," + fmt(c) + ")";
      cmp.push_back(comparison("tight<=theorem " + tag, lb.l_tight, lb.l_theorem, 0.0));
      cmp.push_back(comparison("km<=tight " + tag, km_lipschitz(combined_profile(lambda, c)), lb.l_tight, 1e-6));
    }
  }
  return finish(json::object(), cmp);
}

json default_suite() {
  const json bump = {{"family", "bump"}, {"params", {{"center", {0.0}}, {"radius", 0.5}, {"height", 0.5}}}};
  const json bump_neg = {{"family", "bump"}, {"params", {{"center", {0.5}}, {"radius", 0.7}, {"height", -0.8}}}};
  const json gauss_neg = {{"family", "gaussian"}, {"params", {{"rho", -0.5}}}};
  const json vt = {{"family", "vt_counterexample"}, {"params", {{"T", 4.0}}}};
  return json::array({
      {{"name", "metadata_bump"}, {"kind", "metadata"}, {"potential", bump}},
      {{"name", "metadata_vt"}, {"kind", "metadata"}, {"potential", vt}},
      {{"name", "lemma5_gaussian"}, {"kind", "lemma5"}, {"potential", gauss_neg}},
      {{"name", "lemma5_bump"}, {"kind", "lemma5"}, {"potential", bump}},
      {{"name", "lemma6_bump"}, {"kind", "lemma6"}, {"potential", bump_neg}},
      {{"name", "drift_bump"}, {"kind", "drift_bound"}, {"potential", bump}},
      {{"name", "contraction_bump"}, {"kind", "contraction"}, {"potential", bump_neg}},
      {{"name", "oracle_bump"}, {"kind", "oracle"}, {"potential", bump}},
      {{"name", "gaussian_transport"}, {"kind", "gaussian_transport"}},
      {{"name", "sharpness"}, {"kind", "sharpness"}, {"T", 20.0}},
      {{"name", "vt"}, {"kind", "vt"}, {"T", 6.0}},
      {{"name", "linear_tail"}, {"kind", "linear_tail"}},
      {{"name", "bounds"}, {"kind", "bounds"}},
  });
}

}  // namespace

int run_verify(const JobConfig& cfg, const std::filesystem::path& out) {
  const CheckContext ctx{cfg.quick, cfg.seed};
  const QuadratureScheme scheme = scheme_from_json(cfg.raw.value("scheme", json()), cfg.quick);
  const json checks = cfg.raw.contains("checks") ? cfg.raw.at("checks") : default_suite();
  if (!checks.is_array()) config_error("'checks' must be an array");
  json results = json::array();
  bool all = true;
  for (const auto& spec : checks) {
    if (!spec.is_object() || !spec.contains("kind")) config_error("every check needs a 'kind'");
    const std::string kind = spec.at("kind").get<std::string>();
    json r;
    if (kind == "metadata") {
      r = check_metadata(spec, ctx, scheme);
    } else if (kind == "lemma5") {
      r = check_lemma5(spec, ctx, scheme);
    } else if (kind == "lemma6") {
      r = check_lemma6(spec, ctx, scheme);
    } else if (kind == "drift_bound") {
      r = check_drift(spec, ctx, scheme);
    } else if (kind == "contraction") {
      r = check_contraction(spec, ctx, scheme);
    } else if (kind == "oracle") {
      r = check_oracle(spec, ctx, scheme);
    } else if (kind == "gaussian_transport") {
      r = check_gaussian_transport(spec, ctx, scheme);
    } else if (kind == "sharpness") {
      r = check_sharpness(spec, ctx);
    } else if (kind == "vt") {
      r = check_vt(spec, ctx);
    } else if (kind == "linear_tail") {
      r = check_linear_tail(spec, ctx, scheme);
    } else if (kind == "bounds") {
      r = check_bounds(spec, ctx);
    } else {
      config_error("unknown check kind '" + kind + "'");
    }
    r["name"] = spec.value("name", kind);
    r["kind"] = kind;
    all = all && r.at("pass").get<bool>();
    results.push_back(std::move(r));
  }
  json report;
  report["config"] = cfg.raw;
  report["checks"] = results;
  report["all_pass"] = all;
  write_json(out, "report.json", report);
  return all ? kExitOk : kExitInvariantFailure;
}

// ---------------------------------------------------------------------------
// counterexample

int run_counterexample(const JobConfig& cfg, const std::filesystem::path& out) {
  const json spec = cfg.raw.value("counterexample", json{{"kind", "vt"}});
  const std::string kind = spec.value("kind", std::string("vt"));
  json report;
  report["config"] = cfg.raw;
  report["kind"] = kind;
  if (kind == "vt") {
    const VtResult r = vt_counterexample_check(num(spec, "T", 6.0), num(spec, "L", 1.0));
    report["result"] = to_json(r);
    report["lower_bound_over_threshold"] = r.lipschitz_lower / r.threshold;
  } else if (kind == "sharpness") {
    const double T = num(spec, "T", 20.0);
    const double t = num(spec, "t", 0.5 * std::log(2.0));
    report["result"] = to_json(sharpness_check(T, t));
    auto os = open_output(out, "sharpness.csv");
    csv_header(os, cfg);
    os << "x,h\n";
    for (int i = 0; i <= 120; ++i) {
      const double x = -3.0 + 0.05 * i;
      os << fmt(x) << ',' << fmt(sharpness_h(x, T)) << '\n';
    }
  } else if (kind == "linear_tail") {
    const QuadratureScheme scheme = scheme_from_json(cfg.raw.value("scheme", json()), cfg.quick);
    const Potential p = potential_from_json(spec.value("potential", json{{"family", "linear_tail"}}), scheme);
    const TailFit f = tail_test(p, num(spec, "x_lo", 2.0), num(spec, "x_hi", 6.0),
                                static_cast<int>(integer(spec, "points", 41)));
    report["result"] = to_json(f);
    auto os = open_output(out, "tail.csv");
    csv_header(os, cfg);
    os << "x,log_sf\n";
    for (std::size_t i = 0; i < f.x.size(); ++i) os << fmt(f.x[i]) << ',' << fmt(f.log_sf[i]) << '\n';
  } else {
    config_error("unknown counterexample kind '" + kind + "'");
  }
  write_json(out, "report.json", report);
  return kExitOk;
}

// ---------------------------------------------------------------------------

int run_job(const JobConfig& cfg, const std::filesystem::path& out) {
  if (cfg.command == "transport") return run_transport(cfg, out);
  if (cfg.command == "bound") return run_bound(cfg, out);
  if (cfg.command == "profile") return run_profile(cfg, out);
  if (cfg.command == "verify") return run_verify(cfg, out);
  if (cfg.command == "counterexample") return run_counterexample(cfg, out);
  config_error("unknown command '" + cfg.command + "'");
}

int run_job_file(const std::string& command, const std::filesystem::path& config, const std::filesystem::path& out,
                 bool quick, std::optional<std::uint64_t> seed) {
  try {
    const JobConfig cfg = load_job_config(config, command, quick, seed);
    return run_job(cfg, out);
  } catch (const Error& e) {
    std::cerr << "lipmap: " << e.what() << '\n';
    return is_numeric_failure(e.code()) ? kExitNumericFailure : kExitConfigError;
  } catch (const json::exception& e) {
    std::cerr << "lipmap: CONFIG: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "lipmap: CONFIG: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "lipmap: NUMERIC: " << e.what() << '\n';
    return kExitNumericFailure;
  }
}

}  // namespace lipmap
