#pragma once

#include "lipmap/potentials.hpp"

#include <vector>

namespace lipmap {

/// The 1-D law mu = e^{-V} dgamma, tabulated once by Gauss-Kronrod on a
/// partition made of the potential's breakpoints and a uniform grid.
/// cdf and sf are both accumulated directly so each stays accurate in its
/// own tail.
class Distribution1d {
 public:
  struct Options {
    double spacing = 0.25;
    double range = 40.0;
    double rel_tol = 1e-13;
  };

  explicit Distribution1d(Potential p);
  Distribution1d(Potential p, Options opt);

  /// Lebesgue density e^{-V(x)} phi(x) (not rescaled by mass()).
  double pdf(double x) const;
  double log_pdf(double x) const;
  /// Total mass; 1 up to normalisation error for normalized potentials.
  double mass() const { return total_; }

  /// Distribution functions of the normalized law mu / mass().
  double cdf(double x) const;
  double sf(double x) const;
  double log_sf(double x) const;
  /// x with cdf(x) = q.
  double quantile(double q) const;
  /// x with sf(x) = p, accurate for tiny p.
  double upper_quantile(double p) const;

  const Potential& potential() const { return p_; }

 private:
  double piece(double a, double b) const;
  std::size_t locate(double x) const;
  double solve(double target, bool upper) const;

  Potential p_;
  Options opt_;
  std::vector<double> knots_;
  std::vector<double> below_;  ///< mass of (-inf, knots_[i]]
  std::vector<double> above_;  ///< mass of [knots_[i], inf)
  double total_ = 0.0;
};

}  // namespace lipmap
