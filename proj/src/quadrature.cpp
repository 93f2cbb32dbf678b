#include "lipmap/quadrature.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>

namespace lipmap {

// ---------------------------------------------------------------------------
// Normal helpers

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double mills_ratio(double x) {
  if (x < 20.0) return normal_sf(x) / normal_pdf(x);
  // Laplace continued fraction, evaluated bottom-up.
  double frac = x;
  for (int k = 60; k >= 1; --k) frac = x + k / frac;
  return 1.0 / frac;
}

double log_normal_cdf(double x) {
  if (x > 0.0) return std::log1p(-normal_sf(x));
  if (x > -20.0) return std::log(normal_cdf(x));
  return -0.5 * x * x - kLogSqrt2Pi + std::log(mills_ratio(-x));
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::BadParams, "normal_quantile needs p in (0,1)");
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

// ---------------------------------------------------------------------------
// Counter-based stream

namespace {

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

double CounterNormal::uniform(std::uint64_t k) const {
  const std::uint64_t bits = splitmix(splitmix(seed_) ^ splitmix(k + 0x632be59bd9b4e019ULL));
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

double CounterNormal::operator()(std::uint64_t k) const {
  const double u1 = uniform(2 * k);
  const double u2 = uniform(2 * k + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void CounterNormal::vector(std::uint64_t k, VectorRef out) const {
  const auto dim = static_cast<std::uint64_t>(out.size());
  for (std::uint64_t i = 0; i < dim; ++i) out[static_cast<Eigen::Index>(i)] = (*this)(k * dim + i);
}

// ---------------------------------------------------------------------------
// Gauss-Hermite

namespace {

// Physicists' rule by Newton iteration on the orthonormal recurrence. Values
// are rescaled on the fly so large n does not overflow; the weight is kept
// in log form.
GaussHermiteRule compute_rule(int n) {
  constexpr double kPim4 = 0.7511255444649425;  // pi^{-1/4}
  std::vector<double> x(n), logw(n);
  const int m = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1) - 1.85575 * std::pow(2.0 * n + 1, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * x[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * x[1];
    } else {
      z = 2.0 * z - x[i - 2];
    }
    double pp = 0.0;
    double log_scale = 0.0;
    for (int its = 0; its < 200; ++its) {
      double p1 = kPim4;
      double p2 = 0.0;
      log_scale = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
        if (std::abs(p1) > 1e150) {
          p1 *= 1e-150;
          p2 *= 1e-150;
          log_scale += 150.0 * std::numbers::ln10;
        }
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    x[i] = z;
    x[n - 1 - i] = -z;
    logw[i] = std::log(2.0) - 2.0 * (std::log(std::abs(pp)) + log_scale);
    logw[n - 1 - i] = logw[i];
  }
  GaussHermiteRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  // Probabilists' normalisation: z = sqrt(2) x, w / sqrt(pi).
  const double log_sqrt_pi = 0.5 * std::log(std::numbers::pi);
  for (int i = 0; i < n; ++i) {
    rule.nodes[n - 1 - i] = std::numbers::sqrt2 * x[i];
    rule.weights[n - 1 - i] = std::exp(logw[i] - log_sqrt_pi);
  }
  // Absorb the last few ulps of the Christoffel sum.
  rule.weights /= rule.weights.sum();
  return rule;
}

}  // namespace

const GaussHermiteRule& gauss_hermite_rule(int n) {
  if (n < 1 || n > 1024) throw Error(ErrorCode::BadParams, "Gauss-Hermite node count must be in [1, 1024]");
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<GaussHermiteRule>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<GaussHermiteRule>(compute_rule(n));
  return *slot;
}

QuadratureScheme QuadratureScheme::gauss_hermite(int nodes) {
  QuadratureScheme s;
  s.kind = Kind::GaussHermite;
  s.nodes = nodes;
  return s;
}

QuadratureScheme QuadratureScheme::monte_carlo(long samples, std::uint64_t seed) {
  QuadratureScheme s;
  s.kind = Kind::MonteCarlo;
  s.samples = samples;
  s.seed = seed;
  return s;
}

namespace {

void sort_by_weight(NodeSet& set) {
  const long m = set.size();
  std::vector<long> order(m);
  std::iota(order.begin(), order.end(), 0L);
  std::stable_sort(order.begin(), order.end(),
                   [&](long a, long b) { return set.weights[a] > set.weights[b]; });
  NodeSet sorted;
  sorted.points.resize(set.points.rows(), m);
  sorted.weights.resize(m);
  for (long k = 0; k < m; ++k) {
    sorted.points.col(k) = set.points.col(order[k]);
    sorted.weights[k] = set.weights[order[k]];
  }
  set = std::move(sorted);
}

void finish(NodeSet& set) {
  set.log_weights = set.weights.array().log();
  set.radius2 = set.points.colwise().squaredNorm().transpose();
}

}  // namespace

std::shared_ptr<const NodeSet> make_node_set(const QuadratureScheme& scheme, int dim) {
  if (dim < 1) throw Error(ErrorCode::BadParams, "dimension must be positive");
  auto set = std::make_shared<NodeSet>();
  if (scheme.kind == QuadratureScheme::Kind::GaussHermite) {
    if (dim > scheme.max_tensor_dim)
      throw Error(ErrorCode::DimTooHigh, "tensor Gauss-Hermite requested in dimension " + std::to_string(dim));
    const auto& rule = gauss_hermite_rule(scheme.nodes);
    const int n = scheme.nodes;
    long m = 1;
    for (int i = 0; i < dim; ++i) m *= n;
    set->points.resize(dim, m);
    set->weights.resize(m);
    for (long k = 0; k < m; ++k) {
      long r = k;
      double w = 1.0;
      for (int i = 0; i < dim; ++i) {
        const long j = r % n;
        r /= n;
        set->points(i, k) = rule.nodes[j];
        w *= rule.weights[j];
      }
      set->weights[k] = w;
    }
    // Zero weights (deep tails of large rules) carry nothing.
    long keep = 0;
    for (long k = 0; k < m; ++k) {
      if (set->weights[k] > 0.0) {
        set->points.col(keep) = set->points.col(k);
        set->weights[keep] = set->weights[k];
        ++keep;
      }
    }
    set->points.conservativeResize(dim, keep);
    set->weights.conservativeResize(keep);
    sort_by_weight(*set);
  } else {
    if (scheme.samples < 2) throw Error(ErrorCode::BadParams, "Monte Carlo needs at least two samples");
    const long pairs = scheme.samples / 2;
    set->points.resize(dim, 2 * pairs);
    set->weights = Vector::Constant(2 * pairs, 1.0 / static_cast<double>(2 * pairs));
    const CounterNormal rng(scheme.seed);
    Vector z(dim);
    for (long k = 0; k < pairs; ++k) {
      rng.vector(static_cast<std::uint64_t>(k), z);
      set->points.col(2 * k) = z;
      set->points.col(2 * k + 1) = -z;
    }
  }
  finish(*set);
  return set;
}

std::shared_ptr<const NodeSet> prune_node_set(const NodeSet& nodes, double budget) {
  long keep = nodes.size();
  double dropped = 0.0;
  while (keep > 1) {
    const double mass = nodes.weights[keep - 1] * (1.0 + nodes.radius2[keep - 1]);
    if (dropped + mass > budget) break;
    dropped += mass;
    --keep;
  }
  auto out = std::make_shared<NodeSet>();
  out->points = nodes.points.leftCols(keep);
  out->weights = nodes.weights.head(keep);
  finish(*out);
  return out;
}

// ---------------------------------------------------------------------------
// Adaptive integration

namespace {

struct SimpsonState {
  const std::function<double(double)>& f;
  double tol;
  int max_depth;
  bool converged = true;
  double error = 0.0;
};

double simpson_recurse(SimpsonState& st, double a, double b, double fa, double fm, double fb,
                       double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = st.f(lm);
  const double frm = st.f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * tol || depth >= st.max_depth) {
    if (std::abs(delta) > 15.0 * tol) st.converged = false;
    st.error += std::abs(delta) / 15.0;
    return left + right + delta / 15.0;
  }
  return simpson_recurse(st, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) +
         simpson_recurse(st, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
}

}  // namespace

IntegrationResult adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                                   double rel_tol, double abs_tol, int max_depth) {
  IntegrationResult out;
  if (a == b) return out;
  // Coarse composite estimate fixes the absolute tolerance scale.
  constexpr int kPanels = 16;
  const double h = (b - a) / kPanels;
  std::vector<double> fx(2 * kPanels + 1);
  for (int i = 0; i <= 2 * kPanels; ++i) fx[i] = f(a + 0.5 * h * i);
  double coarse = 0.0;
  for (int i = 0; i < kPanels; ++i) coarse += h / 6.0 * (fx[2 * i] + 4.0 * fx[2 * i + 1] + fx[2 * i + 2]);
  const double tol = std::max(abs_tol, rel_tol * std::abs(coarse));
  SimpsonState st{f, tol / kPanels, max_depth};
  double total = 0.0;
  for (int i = 0; i < kPanels; ++i) {
    const double lo = a + h * i;
    const double hi = (i + 1 == kPanels) ? b : a + h * (i + 1);
    const double whole = (hi - lo) / 6.0 * (fx[2 * i] + 4.0 * fx[2 * i + 1] + fx[2 * i + 2]);
    total += simpson_recurse(st, lo, hi, fx[2 * i], fx[2 * i + 1], fx[2 * i + 2], whole, st.tol, 0);
  }
  out.value = total;
  out.error = st.error;
  out.converged = st.converged && std::isfinite(total);
  return out;
}

IntegrationResult gauss_kronrod(const std::function<double(double)>& f, double a, double b,
                                double rel_tol, int max_depth) {
  IntegrationResult out;
  if (a == b) return out;
  double error = 0.0;
  double l1 = 0.0;
  using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
  if (std::isfinite(a) && std::isfinite(b)) {
    // Boost compares the unit-interval error estimate with a tolerance
    // scaled by the interval, so short intervals never converge. Integrate
    // on [-1, 1] with the Jacobian folded into the integrand instead.
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    out.value = GK::integrate([&](double u) { return half * f(mid + half * u); }, -1.0, 1.0,
                              static_cast<unsigned>(max_depth), rel_tol, &error, &l1);
  } else {
    out.value = GK::integrate(f, a, b, static_cast<unsigned>(max_depth), rel_tol, &error, &l1);
  }
  out.error = error;
  out.converged = std::isfinite(out.value) && error <= std::max(100.0 * rel_tol * l1, 1e-300);
  return out;
}

}  // namespace lipmap
