#include "lipmap/diagnostics.hpp"

#include "lipmap/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace lipmap {

// ---------------------------------------------------------------------------
// Monotone rearrangement

double monotone_rearrangement_1d(const Potential& p, double q) {
  if (p.dim() != 1) throw Error(ErrorCode::BadParams, "monotone rearrangement is one-dimensional");
  return Distribution1d(p).quantile(q);
}

double MonotoneMap::operator()(double y) const {
  // Work in whichever tail keeps Phi(y) accurate.
  if (y <= 0.0) return dist_.quantile(normal_cdf(y));
  return dist_.upper_quantile(normal_sf(y));
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

double ks_distance(const std::vector<double>& samples, const Distribution1d& dist) {
  if (samples.empty()) throw Error(ErrorCode::EmptySamples, "no samples");
  std::vector<double> xs = samples;
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double F = dist.cdf(xs[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
  }
  return d;
}

namespace {

double sliced_ks(const Matrix& samples, const Potential& p, const KsOptions& opt) {
  const int dim = p.dim();
  const CounterNormal dir_stream(opt.seed);
  const CounterNormal ref_stream(opt.seed ^ 0x9e3779b97f4a7c15ULL);
  Matrix ref(dim, opt.reference_samples);
  for (long j = 0; j < opt.reference_samples; ++j) ref_stream.vector(static_cast<std::uint64_t>(j), ref.col(j));
  Vector v(opt.reference_samples);
  p.values(ref, v);
  const double vmin = v.minCoeff();
  Vector w = (-(v.array() - vmin)).exp().matrix();
  w /= w.sum();

  const long n = samples.cols();
  double worst = 0.0;
  Vector u(dim);
  std::vector<long> order(static_cast<std::size_t>(opt.reference_samples));
  for (int k = 0; k < opt.directions; ++k) {
    dir_stream.vector(static_cast<std::uint64_t>(k), u);
    u.normalize();
    const Vector proj_ref = ref.transpose() * u;
    std::iota(order.begin(), order.end(), 0L);
    std::sort(order.begin(), order.end(), [&](long a, long b) { return proj_ref[a] < proj_ref[b]; });
    std::vector<double> proj(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) proj[static_cast<std::size_t>(i)] = samples.col(i).dot(u);
    std::sort(proj.begin(), proj.end());
    std::size_t r = 0;
    double F = 0.0;
    for (long i = 0; i < n; ++i) {
      const double x = proj[static_cast<std::size_t>(i)];
      while (r < order.size() && proj_ref[order[r]] <= x) F += w[order[r++]];
      worst = std::max({worst, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
    }
  }
  return worst;
}

}  // namespace

double ks_distance(const Matrix& samples, const Potential& p, const KsOptions& opt) {
  if (samples.cols() == 0) throw Error(ErrorCode::EmptySamples, "no samples");
  if (samples.rows() != p.dim()) throw Error(ErrorCode::BadParams, "sample dimension does not match the potential");
  if (p.dim() == 1) {
    const std::vector<double> xs(samples.data(), samples.data() + samples.cols());
    return ks_distance(xs, Distribution1d(p));
  }
  return sliced_ks(samples, p, opt);
}

// ---------------------------------------------------------------------------
// Empirical Lipschitz constant

EmpiricalLipschitz empirical_lipschitz(const Matrix& inputs, const Matrix& outputs, std::uint64_t seed) {
  const long n = inputs.cols();
  if (n < 2 || outputs.cols() != n) throw Error(ErrorCode::BadParams, "need at least two matching pairs");
  EmpiricalLipschitz r;
  auto ratio = [&](long i, long j) {
    const double din = (inputs.col(i) - inputs.col(j)).norm();
    ++r.pairs;
    if (din == 0.0) {
      ++r.duplicates;
      return;
    }
    r.value = std::max(r.value, (outputs.col(i) - outputs.col(j)).norm() / din);
  };

  if (inputs.rows() == 1) {
    // On the line the largest slope is attained between neighbours.
    std::vector<long> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0L);
    std::sort(order.begin(), order.end(), [&](long a, long b) { return inputs(0, a) < inputs(0, b); });
    std::size_t start = 0;
    std::size_t prev_start = 0;
    bool have_prev = false;
    while (start < order.size()) {
      std::size_t end = start + 1;
      while (end < order.size() && inputs(0, order[end]) == inputs(0, order[start])) ++end;
      const long k = static_cast<long>(end - start);
      r.duplicates += k * (k - 1) / 2;
      r.pairs += k * (k - 1) / 2;
      if (have_prev) {
        for (std::size_t a = prev_start; a < start; ++a)
          for (std::size_t b = start; b < end; ++b) ratio(order[a], order[b]);
      }
      prev_start = start;
      have_prev = true;
      start = end;
    }
    return r;
  }

  if (n <= 2000) {
    for (long i = 0; i < n; ++i)
      for (long j = i + 1; j < n; ++j) ratio(i, j);
    return r;
  }
  r.exact = false;
  const CounterNormal stream(seed);
  const long draws = 1'000'000;
  for (long k = 0; k < draws; ++k) {
    const long i = std::min(n - 1, static_cast<long>(stream.uniform(2 * static_cast<std::uint64_t>(k)) * n));
    const long j = std::min(n - 1, static_cast<long>(stream.uniform(2 * static_cast<std::uint64_t>(k) + 1) * n));
    if (i == j) continue;
    ratio(i, j);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Sharpness example

namespace {

// 2 phi(x) sinh(x T) / x, with the removable singularity at 0 filled in.
double sinh_term(double x, double T) {
  if (std::abs(x) < 1e-4) {
    const double u2 = (x * T) * (x * T);
    return 2.0 * normal_pdf(x) * T * (1.0 + u2 / 6.0 + u2 * u2 / 120.0);
  }
  const double a = std::exp(x * T - 0.5 * x * x - kLogSqrt2Pi);
  const double b = std::exp(-x * T - 0.5 * x * x - kLogSqrt2Pi);
  return (a - b) / x;
}

}  // namespace

double sharpness_h(double x, double T) {
  if (!(T > 0.0)) throw Error(ErrorCode::BadParams, "T must be positive");
  const double half = 0.5 * T * T;
  const double outer = std::exp(half + log_normal_cdf(-x - T)) + std::exp(half + log_normal_cdf(x - T));
  return outer + sinh_term(x, T);
}

double sharpness_h2(double T) {
  if (!(T > 0.0)) throw Error(ErrorCode::BadParams, "T must be positive");
  return std::sqrt(2.0 / std::numbers::pi) * T * T * T / 3.0;
}

double sharpness_h_unit_tail(double x, double T) {
  if (!(T > 0.0)) throw Error(ErrorCode::BadParams, "T must be positive");
  return normal_cdf(-x - T) + normal_cdf(x - T) + sinh_term(x, T);
}

SharpnessResult sharpness_check(double T, double t) {
  if (!(T > 0.0) || !(t > 0.0)) throw Error(ErrorCode::BadParams, "sharpness_check needs T > 0 and t > 0");
  SharpnessResult r;
  const double e = std::expm1(2.0 * t);
  r.h0 = sharpness_h(0.0, T);
  r.h2 = sharpness_h2(T);
  r.measured = r.h2 / (r.h0 * e);
  r.bound = T * T / (3.0 * e);
  r.ratio = r.measured / r.bound;
  return r;
}

// ---------------------------------------------------------------------------
// Necessity examples

VtResult vt_counterexample_check(double T, double l) {
  const Potential raw = builtin(VtFamily{T});
  const Distribution1d dist(raw);
  VtResult r;
  r.T = T;
  r.tested_l = l;
  r.c_T = -std::log(dist.mass());
  r.mass_tail = dist.sf(T);
  if (r.mass_tail > 0.5) throw Error(ErrorCode::TTooSmall, "mu_T([T, inf)) > 1/2; T is too small");
  r.gaussian_tail_lower = normal_sf(17.0 * T / 16.0);
  r.density_at_T = dist.pdf(T) / dist.mass();
  r.density_formula = std::exp(-0.75 * T * T + r.c_T - kLogSqrt2Pi);
  r.lipschitz_lower = r.mass_tail / (std::sqrt(2.0 * std::numbers::pi) * r.density_at_T);
  r.threshold = 16.0 / 17.0 * std::exp(95.0 * T * T / 512.0);
  r.l_refuted = l < r.lipschitz_lower;
  return r;
}

TailFit tail_test(const Distribution1d& dist, double x_lo, double x_hi, int points) {
  if (!(x_hi > x_lo) || points < 3) throw Error(ErrorCode::BadParams, "tail_test needs x_lo < x_hi and >= 3 points");
  TailFit f;
  Vector xv(points), yv(points);
  for (int i = 0; i < points; ++i) {
    const double x = x_lo + (x_hi - x_lo) * i / (points - 1);
    const double y = dist.log_sf(x);
    if (!std::isfinite(y)) throw Error(ErrorCode::QuadratureFail, "tail probability is not finite");
    f.x.push_back(x);
    f.log_sf.push_back(y);
    xv[i] = x;
    yv[i] = y;
  }
  Matrix A1(points, 2), A2(points, 3);
  A1.col(0) = xv;
  A1.col(1).setOnes();
  A2.col(0) = xv.array().square();
  A2.col(1) = xv;
  A2.col(2).setOnes();
  const Vector c1 = A1.colPivHouseholderQr().solve(yv);
  const Vector c2 = A2.colPivHouseholderQr().solve(yv);
  f.linear_slope = c1[0];
  f.linear_intercept = c1[1];
  f.linear_rms = std::sqrt((A1 * c1 - yv).squaredNorm() / points);
  f.quad_a = c2[0];
  f.quad_b = c2[1];
  f.quad_c = c2[2];
  f.quad_rms = std::sqrt((A2 * c2 - yv).squaredNorm() / points);
  f.incompatible_with_gaussian_pushforward = f.linear_slope < 0.0 && f.quad_a > -1e-3;
  return f;
}

TailFit tail_test(const Potential& p, double x_lo, double x_hi, int points) {
  if (p.dim() != 1) throw Error(ErrorCode::BadParams, "tail_test is one-dimensional");
  return tail_test(Distribution1d(p), x_lo, x_hi, points);
}

// ---------------------------------------------------------------------------
// Reports

BoundComparison compare(std::string name, double measured, double bound, double tolerance) {
  return {std::move(name), measured, bound, tolerance, measured <= bound + tolerance};
}

bool DiagnosticsReport::all_pass() const {
  return std::all_of(bound_comparisons.begin(), bound_comparisons.end(), [](const auto& b) { return b.pass; });
}

nlohmann::json DiagnosticsReport::to_json() const {
  nlohmann::json j;
  j["ks_distance"] = ks_distance ? nlohmann::json(*ks_distance) : nlohmann::json(nullptr);
  if (empirical_lipschitz) {
    j["empirical_lipschitz"] = {{"value", empirical_lipschitz->value},
                                {"pairs", empirical_lipschitz->pairs},
                                {"duplicates", empirical_lipschitz->duplicates},
                                {"exact", empirical_lipschitz->exact}};
  } else {
    j["empirical_lipschitz"] = nullptr;
  }
  j["bound_comparisons"] = nlohmann::json::array();
  for (const auto& b : bound_comparisons)
    j["bound_comparisons"].push_back(
        {{"name", b.name}, {"measured", b.measured}, {"bound", b.bound}, {"tolerance", b.tolerance}, {"pass", b.pass}});
  j["counterexample_results"] = counterexample_results;
  j["failed_samples"] = failed_samples;
  j["all_pass"] = all_pass();
  return j;
}

nlohmann::json to_json(const VtResult& r) {
  return {{"T", r.T},
          {"c_T", r.c_T},
          {"mass_tail", r.mass_tail},
          {"gaussian_tail_lower", r.gaussian_tail_lower},
          {"density_at_T", r.density_at_T},
          {"density_formula", r.density_formula},
          {"lipschitz_lower", r.lipschitz_lower},
          {"threshold", r.threshold},
          {"tested_l", r.tested_l},
          {"l_refuted", r.l_refuted}};
}

nlohmann::json to_json(const SharpnessResult& r) {
  return {{"h0", r.h0}, {"h2", r.h2}, {"measured", r.measured}, {"bound", r.bound}, {"ratio", r.ratio}};
}

nlohmann::json to_json(const TailFit& r) {
  return {{"x", r.x},
          {"log_sf", r.log_sf},
          {"linear_slope", r.linear_slope},
          {"linear_intercept", r.linear_intercept},
          {"linear_rms", r.linear_rms},
          {"quad_a", r.quad_a},
          {"quad_b", r.quad_b},
          {"quad_c", r.quad_c},
          {"quad_rms", r.quad_rms},
          {"incompatible_with_gaussian_pushforward", r.incompatible_with_gaussian_pushforward}};
}

}  // namespace lipmap
