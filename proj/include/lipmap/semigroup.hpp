#pragma once

#include "lipmap/potentials.hpp"
#include "lipmap/quadrature.hpp"
#include "lipmap/types.hpp"

#include <functional>
#include <memory>

namespace lipmap {

/// How D^2 f_t is obtained.
///  Commute: e^{-2t} P_t(D^2 f), needs pointwise Hessians of V.
///  Hermite: E[(Z Z^T - I) f(.)] / (e^{2t} - 1), needs t > 0 only.
///  Auto:    Commute when V has analytic Hessians and a continuous
///           gradient, Hermite otherwise (Commute at t = 0).
enum class HessianRoute { Auto, Commute, Hermite };

struct SemigroupOptions {
  double floor = 1e-300;  ///< f_t at or below this raises UNDERFLOW
  /// Drop negligible Gauss-Hermite nodes when the oscillation is declared.
  bool prune = true;
};

/// Everything about f_t = P_t f at one point, from one pass over the nodes.
struct SemigroupPoint {
  double log_f = 0.0;  ///< log f_t(x) = -V_t(x)
  Vector drift;        ///< grad V_t(x)
  Matrix hess_v;       ///< D^2 V_t(x) (empty unless requested)
};

/// P_t f(x) = E f(e^{-t} x + sqrt(1 - e^{-2t}) Z) for f = e^{-V}, evaluated
/// in log space on a fixed cubature. Immutable and safe to share between
/// threads.
class SemigroupEvaluator {
 public:
  explicit SemigroupEvaluator(Potential potential, QuadratureScheme scheme = {}, SemigroupOptions opt = {});

  const Potential& potential() const { return potential_; }
  const QuadratureScheme& scheme() const { return scheme_; }
  const SemigroupOptions& options() const { return opt_; }
  const NodeSet& nodes() const { return *nodes_; }
  int dim() const { return potential_.dim(); }

  double pt_f(ConstVectorRef x, double t) const;
  double log_pt_f(ConstVectorRef x, double t) const;
  Vector grad_pt_f(ConstVectorRef x, double t) const;
  Matrix hess_pt_f(ConstVectorRef x, double t, HessianRoute route = HessianRoute::Auto) const;

  /// grad V_t(x) = -grad f_t / f_t.
  Vector drift(ConstVectorRef x, double t) const;
  /// Allocation-free variant for integrators.
  void drift(ConstVectorRef x, double t, VectorRef out) const;
  /// D^2 V_t(x).
  Matrix potential_hessian(ConstVectorRef x, double t, HessianRoute route = HessianRoute::Auto) const;
  /// Largest eigenvalue of D^2 log f_t(x); f_t is -value-log-concave near x.
  double log_concavity(ConstVectorRef x, double t, HessianRoute route = HessianRoute::Auto) const;
  /// Max of log_concavity over the grid.
  double concavity_profile(const GridSpec& grid, double t, HessianRoute route = HessianRoute::Auto) const;

  /// One pass computing log f_t, the drift and optionally D^2 V_t.
  SemigroupPoint evaluate(ConstVectorRef x, double t, bool with_hessian,
                          HessianRoute route = HessianRoute::Auto) const;

  /// E g(e^{-t} x + sqrt(1 - e^{-2t}) Z) for an arbitrary integrand, on the
  /// unpruned nodes of this evaluator.
  double apply(const std::function<double(ConstVectorRef)>& g, ConstVectorRef x, double t) const;

 private:
  HessianRoute resolve(HessianRoute route, double t) const;

  Potential potential_;
  QuadratureScheme scheme_;
  SemigroupOptions opt_;
  std::shared_ptr<const NodeSet> full_nodes_;
  std::shared_ptr<const NodeSet> nodes_;
  double log_floor_;
  bool use_gradients_;
};

}  // namespace lipmap
