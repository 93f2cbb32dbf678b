#pragma once

#include "lipmap/types.hpp"

#include <cstdint>
#include <functional>
#include <memory>

namespace lipmap {

// ---------------------------------------------------------------------------
// Standard normal helpers

inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double normal_pdf(double x);
/// Phi(x), computed from erfc so the relative error stays at rounding level
/// in the lower tail.
double normal_cdf(double x);
/// 1 - Phi(x) without cancellation.
double normal_sf(double x);
/// log Phi(x); finite for every finite x (uses the Mills ratio far in the
/// lower tail where Phi underflows).
double log_normal_cdf(double x);
/// Phi^{-1}(p) for p in (0, 1).
double normal_quantile(double p);
/// Mills ratio (1 - Phi(x)) / phi(x).
double mills_ratio(double x);

// ---------------------------------------------------------------------------
// Counter-based normal stream: draw k of stream `seed` depends only on
// (seed, k), so batch results do not depend on how work is split.

class CounterNormal {
 public:
  explicit CounterNormal(std::uint64_t seed) : seed_(seed) {}

  /// Standard normal number `k` of the stream.
  double operator()(std::uint64_t k) const;
  /// Uniform number in (0, 1).
  double uniform(std::uint64_t k) const;
  /// Fills `out` with components (k*dim .. k*dim + dim - 1) of the stream.
  void vector(std::uint64_t k, VectorRef out) const;

 private:
  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Gauss-Hermite rules for the standard Gaussian weight.

struct GaussHermiteRule {
  Vector nodes;    ///< ascending
  Vector weights;  ///< sum to one
};

/// Probabilists' Gauss-Hermite rule with `n` nodes (1 <= n <= 1024). Rules
/// are computed once and cached.
const GaussHermiteRule& gauss_hermite_rule(int n);

struct QuadratureScheme {
  enum class Kind { GaussHermite, MonteCarlo };

  Kind kind = Kind::GaussHermite;
  int nodes = 128;                ///< per axis, Gauss-Hermite only
  long samples = 1'000'000;       ///< Monte Carlo only
  std::uint64_t seed = 20240101;  ///< Monte Carlo only
  int max_tensor_dim = 3;         ///< tensor GH allowed up to this dimension

  static QuadratureScheme gauss_hermite(int nodes);
  static QuadratureScheme monte_carlo(long samples, std::uint64_t seed);

  bool operator==(const QuadratureScheme&) const = default;
};

/// Cubature for E g(Z), Z ~ N(0, I_dim): columns of `points` with weights.
struct NodeSet {
  Matrix points;
  Vector weights;
  Vector log_weights;
  Vector radius2;  ///< |z|^2 per node

  long size() const { return weights.size(); }
  int dim() const { return static_cast<int>(points.rows()); }
};

/// Builds nodes for `scheme` in dimension `dim`. Nodes are sorted by
/// decreasing weight. Monte Carlo nodes come in antithetic pairs.
/// Throws DIM_TOO_HIGH when a tensor rule is requested above
/// `scheme.max_tensor_dim`.
std::shared_ptr<const NodeSet> make_node_set(const QuadratureScheme& scheme, int dim);

/// Drops the lowest-weight nodes while the discarded mass sum w (1 + |z|^2)
/// stays below `budget`. Used for bounded integrands.
std::shared_ptr<const NodeSet> prune_node_set(const NodeSet& nodes, double budget);

// ---------------------------------------------------------------------------
// One-dimensional adaptive integration.

struct IntegrationResult {
  double value = 0.0;
  double error = 0.0;
  bool converged = true;
};

/// Adaptive Simpson with interval halving. Converged when the Richardson
/// error estimate drops below max(abs_tol, rel_tol * |value|) on every leaf.
IntegrationResult adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                                   double rel_tol = 1e-10, double abs_tol = 1e-14,
                                   int max_depth = 50);

/// Adaptive 15-point Gauss-Kronrod. Either endpoint may be infinite.
IntegrationResult gauss_kronrod(const std::function<double(double)>& f, double a, double b,
                                double rel_tol = 1e-13, int max_depth = 20);

}  // namespace lipmap
