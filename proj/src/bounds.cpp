#include "lipmap/bounds.hpp"

#include "lipmap/quadrature.hpp"
#include "lipmap/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lipmap {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1 - e^{-2t} without cancellation.
double one_minus_e2(double t) { return -std::expm1(-2.0 * t); }

double lemma5_or_inf(double lambda, double t) {
  const double denom = 1.0 - lambda * one_minus_e2(t);
  if (denom <= 0.0) return kInf;
  return lambda * std::exp(-2.0 * t) / denom;
}

double lemma6_or_inf(double c, double t) {
  if (t <= 0.0) return kInf;
  return std::exp(c) / std::expm1(2.0 * t);
}

}  // namespace

double lemma5_lambda(double lambda, double t) {
  if (!(lambda >= 0.0) || !(t >= 0.0)) throw Error(ErrorCode::BadParams, "lemma5 needs lambda >= 0 and t >= 0");
  const double v = lemma5_or_inf(lambda, t);
  if (!std::isfinite(v)) throw Error(ErrorCode::Domain, "lambda (1 - e^{-2t}) >= 1: curvature bound has blown up");
  return v;
}

double lemma6_lambda(double c, double t) {
  if (!(c >= 0.0)) throw Error(ErrorCode::BadParams, "oscillation must be >= 0");
  if (!(t > 0.0)) throw Error(ErrorCode::TNonpositive, "lemma6 needs t > 0");
  return lemma6_or_inf(c, t);
}

double switch_time(double lambda) {
  if (!(lambda >= 1.0)) throw Error(ErrorCode::LambdaBelowOne, "switch_time needs lambda >= 1");
  return -0.5 * std::log1p(-0.5 / lambda);
}

HeadTail closed_form_integrals(double lambda, double c, double s) {
  if (!(lambda >= 0.0) || !(c >= 0.0) || !(s >= 0.0)) throw Error(ErrorCode::BadParams, "need lambda, c, s >= 0");
  const double q = one_minus_e2(s);
  if (lambda * q >= 1.0) throw Error(ErrorCode::Domain, "lambda (1 - e^{-2s}) >= 1");
  HeadTail r;
  r.head = -0.5 * std::log1p(-lambda * q);
  r.tail = s > 0.0 ? -0.5 * std::exp(c) * std::log(q) : kInf;
  return r;
}

LipschitzBound lipschitz_bound(double lambda, double c) {
  if (!(lambda >= 1.0)) throw Error(ErrorCode::LambdaBelowOne, "lipschitz_bound needs lambda >= 1");
  if (!(c >= 0.0)) throw Error(ErrorCode::BadParams, "oscillation must be >= 0");
  const double ec = std::exp(c);
  LipschitzBound b;
  b.l_tight = std::exp(0.5 * ec * std::log(2.0 * lambda) + 0.5 * std::log(2.0));
  b.l_theorem = 2.0 * std::pow(2.0 * lambda, ec);
  return b;
}

// ---------------------------------------------------------------------------
// LambdaProfile

LambdaProfile LambdaProfile::zero() { return {Kind::Zero, 0.0, 0.0}; }

LambdaProfile LambdaProfile::lemma5(double lambda) {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::BadParams, "lambda must be >= 0");
  return {Kind::Lemma5, lambda, 0.0};
}

LambdaProfile LambdaProfile::lemma6(double c) {
  if (!(c >= 0.0)) throw Error(ErrorCode::BadParams, "oscillation must be >= 0");
  return {Kind::Lemma6, 0.0, c};
}

LambdaProfile LambdaProfile::combined(double lambda, double c) {
  if (!(lambda >= 0.0) || !(c >= 0.0)) throw Error(ErrorCode::BadParams, "need lambda, c >= 0");
  return {Kind::Combined, lambda, c};
}

LambdaProfile LambdaProfile::proposition(double C, double f_min) {
  if (!(C >= 0.0) || !(f_min > 0.0)) throw Error(ErrorCode::BadParams, "need C >= 0 and f_min > 0");
  return {Kind::Proposition, C, f_min};
}

LambdaProfile LambdaProfile::tabulated(std::vector<double> times, std::vector<double> values) {
  if (times.size() < 2 || times.size() != values.size())
    throw Error(ErrorCode::BadParams, "tabulated profile needs >= 2 matching samples");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1])) throw Error(ErrorCode::BadParams, "profile times must increase");
  if (times.front() < 0.0) throw Error(ErrorCode::BadParams, "profile times must be >= 0");
  LambdaProfile p(Kind::Tabulated, 0.0, 0.0);
  p.times_ = std::move(times);
  p.values_ = std::move(values);
  return p;
}

double LambdaProfile::operator()(double t) const {
  switch (kind_) {
    case Kind::Zero:
      return 0.0;
    case Kind::Lemma5:
      return lemma5_or_inf(a_, t);
    case Kind::Lemma6:
      return lemma6_or_inf(b_, t);
    case Kind::Combined: {
      const double l5 = lemma5_or_inf(a_, t);
      const double l6 = lemma6_or_inf(b_, t);
      return std::min(l5, l6);
    }
    case Kind::Proposition:
      return a_ * std::exp(-2.0 * t) / b_;
    case Kind::Tabulated: {
      if (t <= times_.front()) return values_.front();
      if (t > times_.back()) return 0.0;
      const auto it = std::upper_bound(times_.begin(), times_.end(), t);
      const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - times_.begin()), times_.size() - 1);
      const double w = (t - times_[i - 1]) / (times_[i] - times_[i - 1]);
      return (1.0 - w) * values_[i - 1] + w * values_[i];
    }
  }
  return 0.0;
}

double LambdaProfile::valid_until() const {
  if (kind_ == Kind::Lemma5 && a_ > 1.0) return -0.5 * std::log1p(-1.0 / a_);
  return kInf;
}

std::vector<double> LambdaProfile::kinks() const {
  if (kind_ == Kind::Tabulated) return times_;
  if (kind_ != Kind::Combined) return {};
  // Sign changes of lemma5 - lemma6 on a log grid, refined by bisection.
  const double stop = std::min(60.0, a_ > 1.0 ? -0.5 * std::log1p(-1.0 / a_) : 60.0);
  auto diff = [&](double t) { return lemma5_or_inf(a_, t) - lemma6_or_inf(b_, t); };
  std::vector<double> out;
  const int n = 2000;
  double prev_t = 1e-8;
  double prev = diff(prev_t);
  for (int i = 1; i <= n; ++i) {
    const double t = 1e-8 * std::pow(stop / 1e-8, static_cast<double>(i) / n) * (i == n ? 1.0 - 1e-15 : 1.0);
    const double d = diff(t);
    if ((prev < 0.0) != (d < 0.0)) {
      double lo = prev_t, hi = t;
      for (int k = 0; k < 200 && hi - lo > 1e-15 * hi; ++k) {
        const double mid = 0.5 * (lo + hi);
        ((diff(mid) < 0.0) == (prev < 0.0) ? lo : hi) = mid;
      }
      out.push_back(0.5 * (lo + hi));
    }
    prev_t = t;
    prev = d;
  }
  return out;
}

std::optional<double> LambdaProfile::tail_integral(double t_cut) const {
  switch (kind_) {
    case Kind::Zero:
      return 0.0;
    case Kind::Lemma5:
      if (a_ >= 1.0) return std::nullopt;
      return -0.5 * std::log1p(-a_) + 0.5 * std::log1p(-a_ * one_minus_e2(t_cut));
    case Kind::Lemma6:
      return -0.5 * std::exp(b_) * std::log(one_minus_e2(t_cut));
    case Kind::Combined: {
      const auto k = kinks();
      if (!k.empty() && t_cut < k.back()) return std::nullopt;
      if (lemma6_or_inf(b_, t_cut) <= lemma5_or_inf(a_, t_cut))
        return -0.5 * std::exp(b_) * std::log(one_minus_e2(t_cut));
      if (a_ < 1.0) return -0.5 * std::log1p(-a_) + 0.5 * std::log1p(-a_ * one_minus_e2(t_cut));
      return std::nullopt;
    }
    case Kind::Proposition:
      return a_ * std::exp(-2.0 * t_cut) / (2.0 * b_);
    case Kind::Tabulated:
      if (t_cut >= times_.back()) return 0.0;
      return std::nullopt;
  }
  return std::nullopt;
}

LambdaProfile combined_profile(double lambda, double c) {
  if (!(lambda >= 1.0)) throw Error(ErrorCode::LambdaBelowOne, "combined_profile needs lambda >= 1");
  return LambdaProfile::combined(lambda, c);
}

double km_lipschitz(const LambdaProfile& profile, double t_cut) {
  if (!(t_cut > 0.0)) throw Error(ErrorCode::BadParams, "t_cut must be positive");
  if (profile.kind() == LambdaProfile::Kind::Zero) return 1.0;
  if (profile.kind() == LambdaProfile::Kind::Lemma6)
    throw Error(ErrorCode::NotIntegrable, "the oscillation budget alone is not integrable at t = 0");
  if (profile.kind() == LambdaProfile::Kind::Lemma5 && profile.lambda() >= 1.0)
    throw Error(ErrorCode::NotIntegrable, "the curvature budget blows up in finite time for lambda >= 1");

  std::vector<double> cuts{0.0};
  for (double k : profile.kinks())
    if (k > 0.0 && k < t_cut) cuts.push_back(k);
  double end = t_cut;
  if (!profile.tail_integral(t_cut)) {
    const auto k = profile.kinks();
    if (!k.empty()) end = std::max(t_cut, k.back() + 1.0);
  }
  cuts.push_back(end);

  double total = 0.0;
  for (std::size_t i = 1; i < cuts.size(); ++i) {
    const auto r = adaptive_simpson([&](double t) { return profile(t); }, cuts[i - 1], cuts[i], 1e-12, 1e-15);
    if (!r.converged || !std::isfinite(r.value))
      throw Error(ErrorCode::NotIntegrable, "adaptive integration of the profile did not converge");
    total += r.value;
  }
  const auto tail = profile.tail_integral(end);
  if (!tail || !std::isfinite(*tail)) throw Error(ErrorCode::NotIntegrable, "profile tail is not integrable");
  return std::exp(total + *tail);
}

double proposition_lipschitz(double C, double f_min) {
  if (!(C >= 0.0) || !(f_min > 0.0)) throw Error(ErrorCode::BadParams, "need C >= 0 and f_min > 0");
  return std::exp(C / (2.0 * f_min));
}

double proposition_lipschitz_quoted(double C, double f_min) {
  if (!(C >= 0.0) || !(f_min > 0.0)) throw Error(ErrorCode::BadParams, "need C >= 0 and f_min > 0");
  return C / (2.0 * f_min * f_min);
}

}  // namespace lipmap
