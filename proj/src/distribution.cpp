#include "lipmap/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lipmap {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Distribution1d::Distribution1d(Potential p) : Distribution1d(std::move(p), Options{}) {}

Distribution1d::Distribution1d(Potential p, Options opt) : p_(std::move(p)), opt_(opt) {
  if (p_.dim() != 1) throw Error(ErrorCode::BadParams, "Distribution1d needs a 1-D potential");
  if (!(opt_.spacing > 0.0) || !(opt_.range > 0.0)) throw Error(ErrorCode::BadParams, "bad grid options");
  knots_ = p_.model().breakpoints();
  const int n = static_cast<int>(std::ceil(2.0 * opt_.range / opt_.spacing));
  for (int i = 0; i <= n; ++i) knots_.push_back(-opt_.range + opt_.spacing * i);
  std::sort(knots_.begin(), knots_.end());
  std::vector<double> merged;
  for (double k : knots_)
    if (merged.empty() || k - merged.back() > 1e-12 * (1.0 + std::abs(k))) merged.push_back(k);
  knots_ = std::move(merged);

  const std::size_t m = knots_.size();
  std::vector<double> seg(m - 1);
  for (std::size_t i = 0; i + 1 < m; ++i) seg[i] = piece(knots_[i], knots_[i + 1]);
  below_.resize(m);
  above_.resize(m);
  below_[0] = piece(-kInf, knots_[0]);
  for (std::size_t i = 1; i < m; ++i) below_[i] = below_[i - 1] + seg[i - 1];
  above_[m - 1] = piece(knots_[m - 1], kInf);
  for (std::size_t i = m - 1; i-- > 0;) above_[i] = above_[i + 1] + seg[i];
  total_ = below_[m - 1] + above_[m - 1];
  if (!std::isfinite(total_) || !(total_ > 0.0))
    throw Error(ErrorCode::QuadratureFail, "mass of " + p_.name() + " is not a positive finite number");
}

double Distribution1d::log_pdf(double x) const { return -p_.value(x) - 0.5 * x * x - kLogSqrt2Pi; }

double Distribution1d::pdf(double x) const { return std::exp(log_pdf(x)); }

double Distribution1d::piece(double a, double b) const {
  if (!(b > a)) return 0.0;
  // Exponent relative to a reference point x0, written as
  // -(V(x) - V(x0)) - (x - x0)(x + x0)/2 so the large quadratic terms cancel
  // exactly instead of leaving rounding noise at the quadrature tolerance.
  double x0;
  if (std::isfinite(a) && std::isfinite(b)) {
    x0 = a;
    double best = log_pdf(a);
    for (double c : {0.5 * (a + b), b}) {
      const double l = log_pdf(c);
      if (l > best) best = l, x0 = c;
    }
  } else if (std::isfinite(a)) {
    x0 = a;
  } else if (std::isfinite(b)) {
    x0 = b;
  } else {
    x0 = 0.0;
  }
  const double v0 = p_.value(x0);
  const double l0 = log_pdf(x0);
  if (!std::isfinite(l0)) throw Error(ErrorCode::QuadratureFail, "non-finite density at a CDF knot");
  const auto r = gauss_kronrod(
      [&](double x) { return std::exp(-(p_.value(x) - v0) - 0.5 * (x - x0) * (x + x0)); }, a, b, opt_.rel_tol,
      12);
  if (!std::isfinite(r.value)) throw Error(ErrorCode::QuadratureFail, "non-finite CDF piece");
  return r.value * std::exp(l0);
}

std::size_t Distribution1d::locate(double x) const {
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
  return static_cast<std::size_t>(it - knots_.begin()) - 1;
}

double Distribution1d::cdf(double x) const {
  if (x <= knots_.front()) return piece(-kInf, x) / total_;
  if (x >= knots_.back()) return 1.0 - sf(x);
  const std::size_t i = locate(x);
  return std::min(1.0, (below_[i] + piece(knots_[i], x)) / total_);
}

double Distribution1d::sf(double x) const {
  if (x >= knots_.back()) return piece(x, kInf) / total_;
  if (x <= knots_.front()) return 1.0 - cdf(x);
  const std::size_t i = locate(x);
  return std::min(1.0, (above_[i + 1] + piece(x, knots_[i + 1])) / total_);
}

double Distribution1d::log_sf(double x) const {
  const double s = sf(x);
  if (s > 1e-280) return std::log(s);
  // Deep tail: integrate e^{log_pdf(u) - log_pdf(x)} to keep it in range.
  const double l0 = log_pdf(x);
  const double v0 = p_.value(x);
  const auto r = gauss_kronrod([&](double u) { return std::exp(-(p_.value(u) - v0) - 0.5 * (u - x) * (u + x)); },
                               x, kInf, opt_.rel_tol, 12);
  if (!(r.value > 0.0) || !std::isfinite(r.value)) throw Error(ErrorCode::QuadratureFail, "tail integral failed");
  return std::log(r.value) + l0 - std::log(total_);
}

double Distribution1d::quantile(double q) const {
  if (!(q > 0.0 && q < 1.0)) throw Error(ErrorCode::BadParams, "quantile level must lie in (0, 1)");
  if (q > 0.5) return upper_quantile(1.0 - q);
  return solve(q, false);
}

double Distribution1d::upper_quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::BadParams, "tail level must lie in (0, 1)");
  if (p > 0.5) return solve(1.0 - p, false);
  return solve(p, true);
}

double Distribution1d::solve(double target, bool upper) const {
  // G is cdf (increasing) or sf (decreasing); bracket the root on the tables.
  auto G = [&](double x) { return upper ? sf(x) : cdf(x); };
  double lo, hi;
  const std::size_t m = knots_.size();
  if (!upper) {
    const double mass = target * total_;
    const auto it = std::lower_bound(below_.begin(), below_.end(), mass);
    if (it == below_.begin()) {
      hi = knots_.front();
      double step = 1.0;
      lo = hi - step;
      while (cdf(lo) > target) {
        hi = lo;
        step *= 2.0;
        lo -= step;
        if (step > 1e6) throw Error(ErrorCode::QuadratureFail, "quantile bracket search diverged");
      }
    } else if (it == below_.end()) {
      lo = knots_.back();
      hi = lo + 1.0;
      double step = 1.0;
      while (cdf(hi) < target) {
        lo = hi;
        step *= 2.0;
        hi += step;
        if (step > 1e6) throw Error(ErrorCode::QuadratureFail, "quantile bracket search diverged");
      }
    } else {
      const std::size_t i = static_cast<std::size_t>(it - below_.begin());
      lo = knots_[i - 1];
      hi = knots_[i];
    }
  } else {
    const double mass = target * total_;
    // above_ is decreasing: find the last index with above_[i] >= mass.
    std::size_t i = m;
    for (std::size_t lo_i = 0, hi_i = m; lo_i < hi_i;) {
      const std::size_t mid = (lo_i + hi_i) / 2;
      if (above_[mid] >= mass) {
        i = mid;
        lo_i = mid + 1;
      } else {
        hi_i = mid;
      }
    }
    if (i == m) {
      hi = knots_.front();
      double step = 1.0;
      lo = hi - step;
      while (sf(lo) < target) {
        hi = lo;
        step *= 2.0;
        lo -= step;
        if (step > 1e6) throw Error(ErrorCode::QuadratureFail, "quantile bracket search diverged");
      }
    } else if (i == m - 1) {
      lo = knots_.back();
      hi = lo + 1.0;
      double step = 1.0;
      while (sf(hi) > target) {
        lo = hi;
        step *= 2.0;
        hi += step;
        if (step > 1e6) throw Error(ErrorCode::QuadratureFail, "quantile bracket search diverged");
      }
    } else {
      lo = knots_[i];
      hi = knots_[i + 1];
    }
  }

  // Safeguarded Newton on [lo, hi].
  double x = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double g = G(x) - target;
    const bool below = upper ? (g > 0.0) : (g < 0.0);
    (below ? lo : hi) = x;
    const double slope = pdf(x) / total_ * (upper ? -1.0 : 1.0);
    double next = slope != 0.0 ? x - g / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * (1.0 + std::abs(x)) || hi - lo <= 1e-15 * (1.0 + std::abs(x))) return next;
    x = next;
  }
  return x;
}

}  // namespace lipmap
