#pragma once

#include "lipmap/quadrature.hpp"
#include "lipmap/types.hpp"

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace lipmap {

/// Declared hypotheses on a potential V (target measure e^{-V} dgamma).
struct PotentialInfo {
  /// lambda with D^2 V >= -lambda Id. +inf means no bound is known.
  double curvature_lower = std::numeric_limits<double>::infinity();
  /// c with sup V - inf V <= c, when V is bounded.
  std::optional<double> oscillation;
  /// Bound on |grad V| (needed to certify flow truncation).
  std::optional<double> grad_sup_norm;
};

/// Immutable description of x -> V(x). Derived classes override the batch
/// routines when they can vectorise; the defaults loop over columns.
class PotentialModel {
 public:
  virtual ~PotentialModel() = default;

  virtual int dim() const = 0;
  virtual std::string name() const = 0;
  virtual double value(ConstVectorRef x) const = 0;

  virtual bool analytic_gradient() const { return false; }
  virtual bool analytic_hessian() const { return false; }

  /// Returns V(x) and writes grad V(x). Default: central differences with
  /// step 1e-4 (1 + |x_i|).
  virtual double value_gradient(ConstVectorRef x, VectorRef grad) const;
  /// Default: central differences of the gradient.
  virtual void hessian(ConstVectorRef x, MatrixRef hess) const;

  /// V at every column of `points`.
  virtual void values(ConstMatrixRef points, VectorRef out) const;
  virtual void values_gradients(ConstMatrixRef points, VectorRef out, MatrixRef grads) const;

  /// Locations (1-D) where V or its first derivatives jump; used to split
  /// adaptive integrals.
  virtual std::vector<double> breakpoints() const { return {}; }

  /// False when grad V jumps somewhere. D^2 V then carries singular parts
  /// that a pointwise Hessian misses.
  virtual bool gradient_continuous() const { return breakpoints().empty(); }
};

/// V(x) = model(x) + shift, plus its declared metadata. Cheap to copy;
/// the model is shared and never mutated.
class Potential {
 public:
  Potential(std::shared_ptr<const PotentialModel> model, PotentialInfo info, double shift = 0.0);

  int dim() const { return model_->dim(); }
  std::string name() const { return model_->name(); }

  double value(ConstVectorRef x) const { return model_->value(x) + shift_; }
  double value(double x) const;
  double value_gradient(ConstVectorRef x, VectorRef grad) const {
    return model_->value_gradient(x, grad) + shift_;
  }
  Vector gradient(ConstVectorRef x) const;
  Matrix hessian(ConstVectorRef x) const;
  void hessian(ConstVectorRef x, MatrixRef out) const { model_->hessian(x, out); }
  void values(ConstMatrixRef points, VectorRef out) const;
  void values_gradients(ConstMatrixRef points, VectorRef out, MatrixRef grads) const;

  /// f = e^{-V}.
  double density(ConstVectorRef x) const { return std::exp(-value(x)); }
  double density(double x) const { return std::exp(-value(x)); }

  const PotentialInfo& info() const { return info_; }
  double shift() const { return shift_; }
  bool normalized() const { return normalized_; }
  /// Estimated |int e^{-V} dgamma - 1| when normalized.
  double normalization_error() const { return normalization_error_; }

  const PotentialModel& model() const { return *model_; }
  const std::shared_ptr<const PotentialModel>& model_ptr() const { return model_; }

  Potential with_info(PotentialInfo info) const;
  Potential with_shift(double shift) const;
  Potential as_normalized(double shift, double error) const;

 private:
  std::shared_ptr<const PotentialModel> model_;
  PotentialInfo info_;
  double shift_ = 0.0;
  bool normalized_ = false;
  double normalization_error_ = 0.0;
};

// ---------------------------------------------------------------------------
// Built-in families

/// V = rho |x|^2 / 2, rho > -1.
struct GaussianFamily {
  double rho = 0.0;
  int dim = 1;
};

/// V = height * exp(-|x - center|^2 / (2 radius^2)).
struct BumpFamily {
  Vector center = Vector::Zero(1);
  double radius = 1.0;
  double height = 0.5;
};

/// V = c0 - (x - 1)^2 / 2 for x >= 1, c0 otherwise (dim 1).
struct LinearTailFamily {
  double c0 = 0.0;
};

/// V_T = max{0, T^2/4 - 64 (x - T)^2} (dim 1). Normalising adds -c_T.
struct VtFamily {
  double T = 4.0;
};

/// V = -log g(x / scale), g(y) = min{e^{T^2/2}, e^{y^2/2}} (dim 1).
struct SharpnessFamily {
  double T = 6.0;
  double scale = 1.0;

  /// scale = sqrt(1 - e^{-2t}), the critical scale for time t.
  static SharpnessFamily at_time(double T, double t);
};

using BuiltinFamily = std::variant<GaussianFamily, BumpFamily, LinearTailFamily, VtFamily, SharpnessFamily>;

/// Family member with analytic derivatives and exact declared metadata.
/// The result is not normalized (additive constant 0); see normalize().
Potential builtin(const BuiltinFamily& family);

/// Tabulated 1-D potential: linear interpolation between nodes, constant
/// slope extrapolation from the end segments.
Potential tabulated_1d(std::vector<double> grid, std::vector<double> values, PotentialInfo info = {});

/// Arbitrary potential from a callable (FD derivatives).
Potential from_function(int dim, std::string name, std::function<double(ConstVectorRef)> v, PotentialInfo info = {});

// ---------------------------------------------------------------------------
// Operations

struct NormalizeOptions {
  double rel_tol = 1e-10;
  int start_nodes = 16;
  int max_nodes_1d = 1024;
  int max_nodes_2d = 128;
  /// In dim 2 the finest rule is accepted when its last change is below this.
  double settle_tol_2d = 1e-3;
};

/// int e^{-V} dgamma with a relative error estimate.
struct MassEstimate {
  double mass = 0.0;
  double rel_error = 0.0;
  std::string method;
};

/// Gauss-Hermite node doubling in dim 1-2 (falling back to adaptive
/// Gauss-Kronrod when doubling stalls), Monte Carlo for dim >= 3.
MassEstimate gaussian_mass(const Potential& p, const QuadratureScheme& scheme, const NormalizeOptions& opt = {});

/// V' = V + log int e^{-V} dgamma.
Potential normalize(const Potential& p, const QuadratureScheme& scheme = {}, const NormalizeOptions& opt = {});

struct ValidationReport {
  double min_hessian_eigenvalue = 0.0;
  double curvature_violation = 0.0;  ///< max(0, -lambda - min eig)
  double measured_oscillation = 0.0;
  double oscillation_violation = 0.0;  ///< max(0, osc - c), 0 if c undeclared
  double max_gradient_norm = 0.0;
  double gradient_violation = 0.0;
  long points = 0;

  bool ok(double tol = 1e-6) const {
    return curvature_violation <= tol && oscillation_violation <= tol && gradient_violation <= tol;
  }
};

/// Grid check of the declared metadata. Never throws for violations.
ValidationReport validate_metadata(const Potential& p, const GridSpec& grid);

/// Potential (against gamma) of the law of X + sigma W, X ~ e^{-V} dgamma,
/// W ~ N(0, I). Evaluated with a Gauss-Hermite rule through the identity
/// rho_sigma(x) = phi_s(x) E f(x / (1 + sigma^2) + tau Z).
Potential mollify(const Potential& p, double sigma, int nodes = 128);

struct LipschitzOptions {
  int points = 4096;       ///< y-grid points per axis over |y| <= r
  int points_2d = 256;
  double tolerance = 1e-2; ///< max change after one grid refinement
  double tolerance_2d = 5e-2;  ///< same, for the coarser 2-D grid
  QuadratureScheme scheme = {};
};

/// Inf-convolution V~(x) = inf_{|y| <= r} V(y) + l |x - y|, renormalized.
/// dim <= 2.
Potential lipschitz_regularize(const Potential& p, double l, double r, const LipschitzOptions& opt = {});

struct CaffarelliReduction {
  Potential potential;  ///< log-concave tilde f
  double dilation = 1.0;
};

/// For lambda < 1: tilde f(y) = c f(y / sqrt(1-lambda)) exp(-lambda |y|^2 / (2 (1-lambda)))
/// is log-concave, and y -> y / sqrt(1 - lambda) pushes tilde f dgamma onto f dgamma.
CaffarelliReduction caffarelli_reduction(const Potential& p);

}  // namespace lipmap
