#pragma once

#include "lipmap/distribution.hpp"
#include "lipmap/potentials.hpp"
#include "lipmap/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lipmap {

// ---------------------------------------------------------------------------
// Monotone rearrangement

/// F_mu^{-1}(q) for a normalized 1-D potential.
double monotone_rearrangement_1d(const Potential& p, double q);

/// y -> F_mu^{-1}(Phi(y)), the increasing map pushing gamma onto mu.
class MonotoneMap {
 public:
  explicit MonotoneMap(const Potential& p) : dist_(p) {}
  explicit MonotoneMap(Distribution1d dist) : dist_(std::move(dist)) {}

  double operator()(double y) const;
  const Distribution1d& distribution() const { return dist_; }

 private:
  Distribution1d dist_;
};

// ---------------------------------------------------------------------------
// Sample diagnostics

struct KsOptions {
  int directions = 20;                 ///< sliced variant, dim >= 2
  long reference_samples = 200000;     ///< weighted reference draws, dim >= 2
  std::uint64_t seed = 7;
};

/// sup |F_n - F_mu|. Samples are columns; rows = dimension.
double ks_distance(const Matrix& samples, const Potential& p, const KsOptions& opt = {});
double ks_distance(const std::vector<double>& samples, const Distribution1d& dist);

struct EmpiricalLipschitz {
  double value = 0.0;
  long pairs = 0;       ///< pairs examined
  long duplicates = 0;  ///< pairs with identical inputs, skipped
  bool exact = true;    ///< false when pairs were subsampled
};

/// max |out_i - out_j| / |in_i - in_j|. Exact in 1-D (adjacent pairs after
/// sorting suffice) and for up to 2000 points; otherwise 10^6 seeded pairs.
EmpiricalLipschitz empirical_lipschitz(const Matrix& inputs, const Matrix& outputs, std::uint64_t seed = 11);

// ---------------------------------------------------------------------------
// Sharpness example: g(y) = min{e^{T^2/2}, e^{y^2/2}}

/// h(x) = E g(x + Z) in closed form.
double sharpness_h(double x, double T);
/// h''(0) = sqrt(2/pi) T^3 / 3.
double sharpness_h2(double T);
/// The closed form with the outer region weighted by 1 instead of
/// e^{T^2/2}. Kept for comparison; it is not E g(x + Z).
double sharpness_h_unit_tail(double x, double T);

struct SharpnessResult {
  double h0 = 0.0;
  double h2 = 0.0;
  double measured = 0.0;  ///< (log f_t)''(0)
  double bound = 0.0;     ///< T^2 / (3 (e^{2t} - 1))
  double ratio = 0.0;
};

/// f(x) = g(x / sqrt(1 - e^{-2t})), so f_t(x) = h(x / sqrt(e^{2t} - 1)).
SharpnessResult sharpness_check(double T, double t);

// ---------------------------------------------------------------------------
// Necessity examples

struct VtResult {
  double T = 0.0;
  double c_T = 0.0;             ///< normalising constant, V = max{...} - c_T
  double mass_tail = 0.0;       ///< mu_T([T, inf))
  double gaussian_tail_lower = 0.0;  ///< gamma([17T/16, inf))
  double density_at_T = 0.0;    ///< g_T(T) from the potential
  double density_formula = 0.0; ///< (2 pi)^{-1/2} e^{-3T^2/4 + c_T}
  double lipschitz_lower = 0.0; ///< mu_T([T, inf)) / (sqrt(2 pi) g_T(T))
  double threshold = 0.0;       ///< (16/17) exp(95 T^2 / 512)
  double tested_l = 0.0;
  bool l_refuted = false;       ///< tested_l < lipschitz_lower
};

/// T_TOO_SMALL when mu_T([T, inf)) > 1/2.
VtResult vt_counterexample_check(double T, double l);

struct TailFit {
  std::vector<double> x;
  std::vector<double> log_sf;
  double linear_slope = 0.0;
  double linear_intercept = 0.0;
  double linear_rms = 0.0;
  double quad_a = 0.0;  ///< log_sf ~ a x^2 + b x + c
  double quad_b = 0.0;
  double quad_c = 0.0;
  double quad_rms = 0.0;
  /// A Lipschitz image of gamma has log Pr(X >= x) <= -(x - m)^2 / (2 L^2);
  /// a tail with no curvature on the range cannot be one.
  bool incompatible_with_gaussian_pushforward = false;
};

TailFit tail_test(const Potential& p, double x_lo, double x_hi, int points = 41);
TailFit tail_test(const Distribution1d& dist, double x_lo, double x_hi, int points = 41);

// ---------------------------------------------------------------------------
// Reports

struct BoundComparison {
  std::string name;
  double measured = 0.0;
  double bound = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

BoundComparison compare(std::string name, double measured, double bound, double tolerance = 0.0);

struct DiagnosticsReport {
  std::optional<double> ks_distance;
  std::optional<EmpiricalLipschitz> empirical_lipschitz;
  std::vector<BoundComparison> bound_comparisons;
  nlohmann::json counterexample_results = nlohmann::json::object();
  std::vector<long> failed_samples;

  bool all_pass() const;
  nlohmann::json to_json() const;
};

nlohmann::json to_json(const VtResult& r);
nlohmann::json to_json(const SharpnessResult& r);
nlohmann::json to_json(const TailFit& r);

}  // namespace lipmap
