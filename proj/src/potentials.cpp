#include "lipmap/potentials.hpp"

#include "lipmap/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace lipmap {

// ---------------------------------------------------------------------------
// PotentialModel defaults

namespace {

double fd_step(double xi) { return 1e-4 * (1.0 + std::abs(xi)); }

}  // namespace

double PotentialModel::value_gradient(ConstVectorRef x, VectorRef grad) const {
  Vector y = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = fd_step(x[i]);
    y[i] = x[i] + h;
    const double up = value(y);
    y[i] = x[i] - h;
    const double down = value(y);
    y[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return value(x);
}

void PotentialModel::hessian(ConstVectorRef x, MatrixRef hess) const {
  const Eigen::Index n = x.size();
  Vector y = x;
  if (analytic_gradient()) {
    Vector gu(n), gd(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double h = fd_step(x[i]);
      y[i] = x[i] + h;
      value_gradient(y, gu);
      y[i] = x[i] - h;
      value_gradient(y, gd);
      y[i] = x[i];
      hess.col(i) = (gu - gd) / (2.0 * h);
    }
    const Matrix sym = 0.5 * (hess + hess.transpose());
    hess = sym;
    return;
  }
  const double v0 = value(x);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double hi = fd_step(x[i]);
    y[i] = x[i] + hi;
    const double up = value(y);
    y[i] = x[i] - hi;
    const double down = value(y);
    y[i] = x[i];
    hess(i, i) = (up - 2.0 * v0 + down) / (hi * hi);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double hj = fd_step(x[j]);
      double acc = 0.0;
      for (int si : {1, -1}) {
        for (int sj : {1, -1}) {
          y[i] = x[i] + si * hi;
          y[j] = x[j] + sj * hj;
          acc += si * sj * value(y);
        }
      }
      y[i] = x[i];
      y[j] = x[j];
      hess(i, j) = hess(j, i) = acc / (4.0 * hi * hj);
    }
  }
}

void PotentialModel::values(ConstMatrixRef points, VectorRef out) const {
  for (Eigen::Index k = 0; k < points.cols(); ++k) out[k] = value(points.col(k));
}

void PotentialModel::values_gradients(ConstMatrixRef points, VectorRef out, MatrixRef grads) const {
  Vector g(points.rows());
  for (Eigen::Index k = 0; k < points.cols(); ++k) {
    out[k] = value_gradient(points.col(k), g);
    grads.col(k) = g;
  }
}

// ---------------------------------------------------------------------------
// Potential

Potential::Potential(std::shared_ptr<const PotentialModel> model, PotentialInfo info, double shift)
    : model_(std::move(model)), info_(info), shift_(shift) {
  if (!model_) throw Error(ErrorCode::BadParams, "potential without a model");
}

double Potential::value(double x) const {
  const Eigen::Matrix<double, 1, 1> v(x);
  return value(v);
}

Vector Potential::gradient(ConstVectorRef x) const {
  Vector g(dim());
  model_->value_gradient(x, g);
  return g;
}

Matrix Potential::hessian(ConstVectorRef x) const {
  Matrix h(dim(), dim());
  model_->hessian(x, h);
  return h;
}

void Potential::values(ConstMatrixRef points, VectorRef out) const {
  model_->values(points, out);
  out.array() += shift_;
}

void Potential::values_gradients(ConstMatrixRef points, VectorRef out, MatrixRef grads) const {
  model_->values_gradients(points, out, grads);
  out.array() += shift_;
}

Potential Potential::with_info(PotentialInfo info) const {
  Potential p = *this;
  p.info_ = info;
  return p;
}

Potential Potential::with_shift(double shift) const {
  Potential p = *this;
  p.shift_ = shift;
  p.normalized_ = false;
  p.normalization_error_ = 0.0;
  return p;
}

Potential Potential::as_normalized(double shift, double error) const {
  Potential p = *this;
  p.shift_ = shift;
  p.normalized_ = true;
  p.normalization_error_ = error;
  return p;
}

// ---------------------------------------------------------------------------
// Families

namespace {

class GaussianModel final : public PotentialModel {
 public:
  GaussianModel(double rho, int dim) : rho_(rho), dim_(dim) {}

  int dim() const override { return dim_; }
  std::string name() const override { return "gaussian(rho=" + std::to_string(rho_) + ")"; }
  bool analytic_gradient() const override { return true; }
  bool analytic_hessian() const override { return true; }

  double value(ConstVectorRef x) const override { return 0.5 * rho_ * x.squaredNorm(); }
  double value_gradient(ConstVectorRef x, VectorRef g) const override {
    g = rho_ * x;
    return 0.5 * rho_ * x.squaredNorm();
  }
  void hessian(ConstVectorRef, MatrixRef h) const override {
    h.setIdentity();
    h *= rho_;
  }
  void values(ConstMatrixRef pts, VectorRef out) const override {
    out = 0.5 * rho_ * pts.colwise().squaredNorm().transpose();
  }
  void values_gradients(ConstMatrixRef pts, VectorRef out, MatrixRef grads) const override {
    out = 0.5 * rho_ * pts.colwise().squaredNorm().transpose();
    grads = rho_ * pts;
  }

 private:
  double rho_;
  int dim_;
};

class BumpModel final : public PotentialModel {
 public:
  BumpModel(Vector center, double radius, double height)
      : center_(std::move(center)), inv_r2_(1.0 / (radius * radius)), height_(height) {}

  int dim() const override { return static_cast<int>(center_.size()); }
  std::string name() const override {
    return "bump(radius=" + std::to_string(1.0 / std::sqrt(inv_r2_)) + ", height=" + std::to_string(height_) + ")";
  }
  bool analytic_gradient() const override { return true; }
  bool analytic_hessian() const override { return true; }

  double value(ConstVectorRef x) const override {
    return height_ * std::exp(-0.5 * inv_r2_ * (x - center_).squaredNorm());
  }
  double value_gradient(ConstVectorRef x, VectorRef g) const override {
    const double v = value(x);
    g = -v * inv_r2_ * (x - center_);
    return v;
  }
  void hessian(ConstVectorRef x, MatrixRef h) const override {
    const double v = value(x);
    const Vector d = x - center_;
    h = v * inv_r2_ * inv_r2_ * d * d.transpose();
    h.diagonal().array() -= v * inv_r2_;
  }
  void values(ConstMatrixRef pts, VectorRef out) const override {
    out = height_ * (-0.5 * inv_r2_ * (pts.colwise() - center_).colwise().squaredNorm().transpose().array()).exp();
  }
  void values_gradients(ConstMatrixRef pts, VectorRef out, MatrixRef grads) const override {
    values(pts, out);
    grads = (pts.colwise() - center_) * (-inv_r2_);
    grads.array().rowwise() *= out.transpose().array();
  }

 private:
  Vector center_;
  double inv_r2_;
  double height_;
};

class LinearTailModel final : public PotentialModel {
 public:
  explicit LinearTailModel(double c0) : c0_(c0) {}

  int dim() const override { return 1; }
  std::string name() const override { return "linear_tail"; }
  bool analytic_gradient() const override { return true; }
  bool analytic_hessian() const override { return true; }
  std::vector<double> breakpoints() const override { return {1.0}; }
  bool gradient_continuous() const override { return true; }

  double value(ConstVectorRef x) const override {
    const double u = x[0] - 1.0;
    return u < 0.0 ? c0_ : c0_ - 0.5 * u * u;
  }
  double value_gradient(ConstVectorRef x, VectorRef g) const override {
    const double u = x[0] - 1.0;
    g[0] = u < 0.0 ? 0.0 : -u;
    return u < 0.0 ? c0_ : c0_ - 0.5 * u * u;
  }
  void hessian(ConstVectorRef x, MatrixRef h) const override { h(0, 0) = x[0] < 1.0 ? 0.0 : -1.0; }

 private:
  double c0_;
};

class VtModel final : public PotentialModel {
 public:
  explicit VtModel(double T) : T_(T) {}

  int dim() const override { return 1; }
  std::string name() const override { return "vt_counterexample(T=" + std::to_string(T_) + ")"; }
  bool analytic_gradient() const override { return true; }
  bool analytic_hessian() const override { return true; }
  std::vector<double> breakpoints() const override { return {15.0 * T_ / 16.0, 17.0 * T_ / 16.0}; }

  double value(ConstVectorRef x) const override {
    const double d = x[0] - T_;
    return std::max(0.0, 0.25 * T_ * T_ - 64.0 * d * d);
  }
  double value_gradient(ConstVectorRef x, VectorRef g) const override {
    const double d = x[0] - T_;
    const double inner = 0.25 * T_ * T_ - 64.0 * d * d;
    g[0] = inner > 0.0 ? -128.0 * d : 0.0;
    return std::max(0.0, inner);
  }
  void hessian(ConstVectorRef x, MatrixRef h) const override {
    const double d = x[0] - T_;
    h(0, 0) = 0.25 * T_ * T_ - 64.0 * d * d > 0.0 ? -128.0 : 0.0;
  }

 private:
  double T_;
};

class SharpnessModel final : public PotentialModel {
 public:
  SharpnessModel(double T, double scale) : T_(T), scale_(scale) {}

  int dim() const override { return 1; }
  std::string name() const override {
    return "sharpness(T=" + std::to_string(T_) + ", scale=" + std::to_string(scale_) + ")";
  }
  bool analytic_gradient() const override { return true; }
  bool analytic_hessian() const override { return true; }
  std::vector<double> breakpoints() const override { return {-scale_ * T_, scale_ * T_}; }

  double value(ConstVectorRef x) const override {
    const double u = x[0] / scale_;
    return -0.5 * std::min(T_ * T_, u * u);
  }
  double value_gradient(ConstVectorRef x, VectorRef g) const override {
    const double u = x[0] / scale_;
    const bool inside = std::abs(u) < T_;
    g[0] = inside ? -u / scale_ : 0.0;
    return -0.5 * std::min(T_ * T_, u * u);
  }
  void hessian(ConstVectorRef x, MatrixRef h) const override {
    h(0, 0) = std::abs(x[0] / scale_) < T_ ? -1.0 / (scale_ * scale_) : 0.0;
  }

 private:
  double T_;
  double scale_;
};

class TabulatedModel final : public PotentialModel {
 public:
  TabulatedModel(std::vector<double> grid, std::vector<double> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    const double h = (grid_.back() - grid_.front()) / static_cast<double>(grid_.size() - 1);
    uniform_ = true;
    for (std::size_t i = 1; i < grid_.size(); ++i) {
      if (std::abs(grid_[i] - grid_.front() - h * static_cast<double>(i)) > 1e-9 * (1.0 + std::abs(grid_[i]))) {
        uniform_ = false;
        break;
      }
    }
    inv_h_ = 1.0 / h;
  }

  int dim() const override { return 1; }
  std::string name() const override { return "table(" + std::to_string(grid_.size()) + " nodes)"; }
  bool analytic_gradient() const override { return true; }
  std::vector<double> breakpoints() const override { return grid_; }

  double value(ConstVectorRef x) const override {
    double slope = 0.0;
    return eval(x[0], slope);
  }
  double value_gradient(ConstVectorRef x, VectorRef g) const override {
    double slope = 0.0;
    const double v = eval(x[0], slope);
    g[0] = slope;
    return v;
  }
  // Piecewise linear: the Hessian vanishes away from the nodes.
  void hessian(ConstVectorRef, MatrixRef h) const override { h(0, 0) = 0.0; }

  void values(ConstMatrixRef pts, VectorRef out) const override {
    double slope = 0.0;
    for (Eigen::Index k = 0; k < pts.cols(); ++k) out[k] = eval(pts(0, k), slope);
  }
  void values_gradients(ConstMatrixRef pts, VectorRef out, MatrixRef grads) const override {
    double slope = 0.0;
    for (Eigen::Index k = 0; k < pts.cols(); ++k) {
      out[k] = eval(pts(0, k), slope);
      grads(0, k) = slope;
    }
  }

 private:
  std::size_t segment(double x) const {
    const std::size_t last = grid_.size() - 2;
    if (x <= grid_.front()) return 0;
    if (x >= grid_.back()) return last;
    if (uniform_) {
      const auto i = static_cast<std::size_t>((x - grid_.front()) * inv_h_);
      return std::min(i, last);
    }
    const auto it = std::upper_bound(grid_.begin(), grid_.end(), x);
    return std::min(static_cast<std::size_t>(it - grid_.begin()) - 1, last);
  }

  double eval(double x, double& slope) const {
    const std::size_t i = segment(x);
    slope = (values_[i + 1] - values_[i]) / (grid_[i + 1] - grid_[i]);
    return values_[i] + slope * (x - grid_[i]);
  }

  std::vector<double> grid_;
  std::vector<double> values_;
  bool uniform_ = false;
  double inv_h_ = 0.0;
};

class FunctionModel final : public PotentialModel {
 public:
  FunctionModel(int dim, std::string name, std::function<double(ConstVectorRef)> v)
      : dim_(dim), name_(std::move(name)), v_(std::move(v)) {}

  int dim() const override { return dim_; }
  std::string name() const override { return name_; }
  double value(ConstVectorRef x) const override { return v_(x); }

 private:
  int dim_;
  std::string name_;
  std::function<double(ConstVectorRef)> v_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::BadParams, what);
}

}  // namespace

SharpnessFamily SharpnessFamily::at_time(double T, double t) {
  require(t > 0.0, "sharpness time must be positive");
  return SharpnessFamily{T, std::sqrt(-std::expm1(-2.0 * t))};
}

Potential builtin(const BuiltinFamily& family) {
  return std::visit(
      [](const auto& fam) -> Potential {
        using F = std::decay_t<decltype(fam)>;
        PotentialInfo info;
        if constexpr (std::is_same_v<F, GaussianFamily>) {
          require(fam.rho > -1.0, "gaussian family needs rho > -1");
          require(fam.dim >= 1, "gaussian family needs dim >= 1");
          info.curvature_lower = std::max(0.0, -fam.rho);
          if (fam.rho == 0.0) {
            info.oscillation = 0.0;
            info.grad_sup_norm = 0.0;
          }
          return Potential(std::make_shared<GaussianModel>(fam.rho, fam.dim), info);
        } else if constexpr (std::is_same_v<F, BumpFamily>) {
          require(fam.radius > 0.0, "bump radius must be positive");
          require(fam.center.size() >= 1, "bump center must be non-empty");
          const double r2 = fam.radius * fam.radius;
          const double h = fam.height;
          // Radial second derivative h (u - 1) e^{-u/2} / r^2, u = |x-c|^2 / r^2.
          info.curvature_lower = h >= 0.0 ? h / r2 : 2.0 * (-h) * std::exp(-1.5) / r2;
          info.oscillation = std::abs(h);
          info.grad_sup_norm = std::abs(h) * std::exp(-0.5) / fam.radius;
          return Potential(std::make_shared<BumpModel>(fam.center, fam.radius, h), info);
        } else if constexpr (std::is_same_v<F, LinearTailFamily>) {
          info.curvature_lower = 1.0;
          return Potential(std::make_shared<LinearTailModel>(fam.c0), info);
        } else if constexpr (std::is_same_v<F, VtFamily>) {
          require(fam.T > 0.0, "vt family needs T > 0");
          info.curvature_lower = 128.0;
          info.oscillation = 0.25 * fam.T * fam.T;
          info.grad_sup_norm = 8.0 * fam.T;
          return Potential(std::make_shared<VtModel>(fam.T), info);
        } else {
          require(fam.T > 0.0 && fam.scale > 0.0, "sharpness family needs T > 0 and scale > 0");
          info.curvature_lower = 1.0 / (fam.scale * fam.scale);
          info.oscillation = 0.5 * fam.T * fam.T;
          info.grad_sup_norm = fam.T / fam.scale;
          return Potential(std::make_shared<SharpnessModel>(fam.T, fam.scale), info);
        }
      },
      family);
}

Potential tabulated_1d(std::vector<double> grid, std::vector<double> values, PotentialInfo info) {
  require(grid.size() >= 2 && grid.size() == values.size(), "table needs >= 2 nodes and matching values");
  for (std::size_t i = 1; i < grid.size(); ++i) require(grid[i] > grid[i - 1], "table grid must be increasing");
  for (double v : values) require(std::isfinite(v), "table values must be finite");
  if (!info.grad_sup_norm) {
    double s = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i)
      s = std::max(s, std::abs(values[i] - values[i - 1]) / (grid[i] - grid[i - 1]));
    info.grad_sup_norm = s;
  }
  return Potential(std::make_shared<TabulatedModel>(std::move(grid), std::move(values)), info);
}

Potential from_function(int dim, std::string name, std::function<double(ConstVectorRef)> v, PotentialInfo info) {
  require(dim >= 1, "dimension must be positive");
  return Potential(std::make_shared<FunctionModel>(dim, std::move(name), std::move(v)), info);
}

// ---------------------------------------------------------------------------
// Normalisation

namespace {

/// log sum_k w_k e^{-V(z_k)} over a node set.
double log_gaussian_mass(const Potential& p, const NodeSet& nodes) {
  Vector v(nodes.size());
  p.values(nodes.points, v);
  const Eigen::ArrayXd a = nodes.log_weights.array() - v.array();
  const double m = a.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((a - m).exp().sum());
}

double log_mass_kronrod_1d(const Potential& p, double rel_tol, double& rel_error) {
  std::vector<double> cuts = p.model().breakpoints();
  cuts.push_back(0.0);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  // Scale out exp(-V(0)) so moderate shifts cannot overflow.
  const double ref = p.value(0.0);
  const auto integrand = [&](double x) { return std::exp(-(p.value(x) - ref) - 0.5 * x * x - kLogSqrt2Pi); };
  double total = 0.0;
  double err = 0.0;
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i <= cuts.size(); ++i) {
    const double a = i == 0 ? -inf : cuts[i - 1];
    const double b = i == cuts.size() ? inf : cuts[i];
    const auto r = gauss_kronrod(integrand, a, b, rel_tol);
    if (!std::isfinite(r.value)) throw Error(ErrorCode::NonIntegrable, "mass integral diverges for " + p.name());
    total += r.value;
    err += r.error;
  }
  if (!(total > 0.0) || !std::isfinite(total) || err > 1e-6 * total)
    throw Error(ErrorCode::NonIntegrable, "adaptive mass integral did not converge for " + p.name());
  rel_error = err / total;
  return std::log(total) - ref;
}

}  // namespace

MassEstimate gaussian_mass(const Potential& p, const QuadratureScheme& scheme, const NormalizeOptions& opt) {
  MassEstimate est;
  const int dim = p.dim();
  if (dim >= 3) {
    if (scheme.kind != QuadratureScheme::Kind::MonteCarlo)
      throw Error(ErrorCode::DimTooHigh, "normalisation in dimension >= 3 needs a Monte Carlo scheme");
    const auto nodes = make_node_set(scheme, dim);
    Vector v(nodes->size());
    p.values(nodes->points, v);
    const double m = v.minCoeff();
    const Eigen::ArrayXd f = (-(v.array() - m)).exp();
    const double mean = f.mean();
    const double var = (f - mean).square().mean();
    if (!std::isfinite(mean) || !(mean > 0.0)) throw Error(ErrorCode::NonIntegrable, "Monte Carlo mass is not finite");
    est.mass = mean * std::exp(-m);
    est.rel_error = std::sqrt(var / static_cast<double>(f.size())) / mean;
    est.method = "monte_carlo";
    if (!std::isfinite(est.mass)) throw Error(ErrorCode::NonIntegrable, "Monte Carlo mass overflows");
    return est;
  }

  const int max_nodes = dim == 1 ? opt.max_nodes_1d : opt.max_nodes_2d;
  double prev = std::numeric_limits<double>::quiet_NaN();
  double last_change = std::numeric_limits<double>::infinity();
  int growth = 0;
  for (int n = opt.start_nodes; n <= max_nodes; n *= 2) {
    const auto nodes = make_node_set(QuadratureScheme::gauss_hermite(n), dim);
    const double lm = log_gaussian_mass(p, *nodes);
    if (std::isfinite(prev)) {
      last_change = std::abs(std::expm1(lm - prev));
      // Estimates that keep climbing by large factors signal divergence.
      growth = (lm - prev > 1.0) ? growth + 1 : 0;
      if (growth >= 2) throw Error(ErrorCode::NonIntegrable, "Gauss-Hermite mass estimates diverge for " + p.name());
      if (last_change < opt.rel_tol) {
        est.mass = std::exp(lm);
        est.rel_error = last_change;
        est.method = "gauss_hermite(" + std::to_string(n) + ")";
        return est;
      }
    }
    prev = lm;
  }
  if (dim == 1) {
    double rel_error = 0.0;
    const double lm = log_mass_kronrod_1d(p, 1e-13, rel_error);
    est.mass = std::exp(lm);
    est.rel_error = rel_error;
    est.method = "gauss_kronrod";
    return est;
  }
  // Two dimensions: accept the finest tensor rule when it has settled.
  if (last_change > opt.settle_tol_2d || !std::isfinite(prev))
    throw Error(ErrorCode::NonIntegrable, "Gauss-Hermite mass estimates did not settle for " + p.name());
  est.mass = std::exp(prev);
  est.rel_error = last_change;
  est.method = "gauss_hermite(" + std::to_string(max_nodes) + ")";
  return est;
}

Potential normalize(const Potential& p, const QuadratureScheme& scheme, const NormalizeOptions& opt) {
  const MassEstimate est = gaussian_mass(p, scheme, opt);
  return p.as_normalized(p.shift() + std::log(est.mass), est.rel_error);
}

// ---------------------------------------------------------------------------
// Validation

ValidationReport validate_metadata(const Potential& p, const GridSpec& grid) {
  ValidationReport r;
  r.points = grid.size();
  double vmin = std::numeric_limits<double>::infinity();
  double vmax = -vmin;
  double emin = vmin;
  double gmax = 0.0;
  Matrix h(p.dim(), p.dim());
  Vector g(p.dim());
  for (long k = 0; k < grid.size(); ++k) {
    const Vector x = grid.point(k);
    const double v = p.value_gradient(x, g);
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
    gmax = std::max(gmax, g.norm());
    p.hessian(x, h);
    emin = std::min(emin, linalg::min_eigenvalue(h));
  }
  r.min_hessian_eigenvalue = emin;
  r.curvature_violation = std::max(0.0, -p.info().curvature_lower - emin);
  if (!std::isfinite(p.info().curvature_lower)) r.curvature_violation = 0.0;
  r.measured_oscillation = vmax - vmin;
  if (p.info().oscillation) r.oscillation_violation = std::max(0.0, r.measured_oscillation - *p.info().oscillation);
  r.max_gradient_norm = gmax;
  if (p.info().grad_sup_norm) r.gradient_violation = std::max(0.0, gmax - *p.info().grad_sup_norm);
  return r;
}

// ---------------------------------------------------------------------------
// Mollification

namespace {

class MollifiedModel final : public PotentialModel {
 public:
  MollifiedModel(Potential inner, double sigma, std::shared_ptr<const NodeSet> nodes)
      : inner_(std::move(inner)), sigma2_(sigma * sigma), nodes_(std::move(nodes)) {
    contract_ = 1.0 / (1.0 + sigma2_);
    tau_ = sigma / std::sqrt(1.0 + sigma2_);
  }

  int dim() const override { return inner_.dim(); }
  std::string name() const override { return "mollify(" + inner_.name() + ", sigma^2=" + std::to_string(sigma2_) + ")"; }
  bool analytic_gradient() const override { return true; }
  bool analytic_hessian() const override { return true; }

  double value(ConstVectorRef x) const override {
    return eval(x, nullptr, nullptr);
  }
  double value_gradient(ConstVectorRef x, VectorRef g) const override {
    Vector grad(dim());
    const double v = eval(x, &grad, nullptr);
    g = grad;
    return v;
  }
  void hessian(ConstVectorRef x, MatrixRef h) const override {
    Vector grad(dim());
    Matrix hess(dim(), dim());
    eval(x, &grad, &hess);
    h = hess;
  }

 private:
  // V_sigma(x) = -log E f(c x + tau Z) - |x|^2 sigma^2 c / 2 + (n/2) log(1 + sigma^2), c = 1/(1+sigma^2).
  double eval(ConstVectorRef x, Vector* grad, Matrix* hess) const {
    const int n = dim();
    const long m = nodes_->size();
    Matrix pts = (tau_ * nodes_->points).colwise() + contract_ * x;
    Vector v(m);
    inner_.values(pts, v);
    const Eigen::ArrayXd a = nodes_->log_weights.array() - v.array();
    const double amax = a.maxCoeff();
    if (!std::isfinite(amax)) throw Error(ErrorCode::NonIntegrable, "mollified density vanishes");
    const Eigen::ArrayXd w = (a - amax).exp();
    const double s = w.sum();
    const double log_e = amax + std::log(s);
    const double value = -log_e - 0.5 * x.squaredNorm() * sigma2_ * contract_ + 0.5 * n * std::log1p(sigma2_);
    if (grad || hess) {
      const Vector mean_z = nodes_->points * w.matrix() / s;
      // grad_x log E = c E[Z f] / (tau E f)
      const Vector dlog = contract_ / tau_ * mean_z;
      if (grad) *grad = -dlog - sigma2_ * contract_ * x;
      if (hess) {
        const Matrix second = nodes_->points * w.matrix().asDiagonal() * nodes_->points.transpose() / s;
        Matrix d2e = (second - Matrix::Identity(n, n)) * (contract_ * contract_ / (tau_ * tau_));
        *hess = -(d2e - dlog * dlog.transpose());
        hess->diagonal().array() -= sigma2_ * contract_;
      }
    }
    return value;
  }

  Potential inner_;
  double sigma2_;
  double contract_ = 1.0;
  double tau_ = 0.0;
  std::shared_ptr<const NodeSet> nodes_;
};

}  // namespace

Potential mollify(const Potential& p, double sigma, int nodes) {
  require(sigma > 0.0, "mollify needs sigma > 0");
  const auto set = make_node_set(QuadratureScheme::gauss_hermite(nodes), p.dim());
  PotentialInfo info;
  const double lambda = p.info().curvature_lower;
  if (std::isfinite(lambda)) {
    // Lebesgue potential is kappa-convex, kappa = 1 - lambda; Gaussian
    // convolution maps kappa to kappa / (1 + kappa sigma^2).
    const double kappa = 1.0 - lambda;
    const double denom = 1.0 + kappa * sigma * sigma;
    if (denom > 0.0) info.curvature_lower = 1.0 - kappa / denom;
  }
  Potential out(std::make_shared<MollifiedModel>(p, sigma, set), info);
  return p.normalized() ? out.as_normalized(0.0, p.normalization_error()) : out;
}

// ---------------------------------------------------------------------------
// Lipschitz regularisation

namespace {

struct Envelope1d {
  std::vector<double> x;
  std::vector<double> v;
};

/// Exact inf over the y-grid (n points on [-r, r]) of V(y) + l |x - y| at
/// x-grid nodes covering [-2r, 2r] with the same spacing.
Envelope1d envelope_1d(const Potential& p, double l, double r, int n) {
  const double h = 2.0 * r / (n - 1);
  const int pad = (n - 1) / 2;
  const int total = n + 2 * pad;
  Envelope1d e;
  e.x.resize(total);
  e.v.assign(total, std::numeric_limits<double>::infinity());
  for (int i = 0; i < total; ++i) e.x[i] = -r + h * (i - pad);
  for (int i = 0; i < n; ++i) e.v[pad + i] = p.value(-r + h * i);
  const double step = l * h;
  for (int i = 1; i < total; ++i) e.v[i] = std::min(e.v[i], e.v[i - 1] + step);
  for (int i = total - 2; i >= 0; --i) e.v[i] = std::min(e.v[i], e.v[i + 1] + step);
  return e;
}

class LipschitzEnvelope2d final : public PotentialModel {
 public:
  LipschitzEnvelope2d(const Potential& p, double l, double r, int n) : l_(l) {
    const double h = 2.0 * r / (n - 1);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        Eigen::Vector2d y(-r + h * i, -r + h * j);
        if (y.norm() > r + 1e-12) continue;
        ys_.push_back(y);
        vs_.push_back(p.value(y));
      }
    }
  }

  int dim() const override { return 2; }
  std::string name() const override { return "lipschitz_envelope_2d"; }
  bool gradient_continuous() const override { return false; }
  double value(ConstVectorRef x) const override {
    double best = std::numeric_limits<double>::infinity();
    const Eigen::Vector2d xx(x[0], x[1]);
    for (std::size_t k = 0; k < ys_.size(); ++k) best = std::min(best, vs_[k] + l_ * (xx - ys_[k]).norm());
    return best;
  }

 private:
  double l_;
  std::vector<Eigen::Vector2d> ys_;
  std::vector<double> vs_;
};

}  // namespace

Potential lipschitz_regularize(const Potential& p, double l, double r, const LipschitzOptions& opt) {
  require(l >= 0.0 && r > 0.0, "lipschitz_regularize needs l >= 0 and r > 0");
  require(p.dim() <= 2, "lipschitz_regularize supports dim <= 2");
  PotentialInfo info;
  info.grad_sup_norm = l;
  if (p.dim() == 1) {
    require(opt.points >= 3, "lipschitz_regularize needs at least 3 grid points");
    Envelope1d coarse = envelope_1d(p, l, r, opt.points);
    const Envelope1d fine = envelope_1d(p, l, r, 2 * opt.points - 1);
    double change = 0.0;
    for (std::size_t i = 0; i < coarse.v.size(); ++i) change = std::max(change, std::abs(coarse.v[i] - fine.v[2 * i]));
    if (change > opt.tolerance)
      throw Error(ErrorCode::GridTooCoarse, "inf-convolution changed by " + std::to_string(change) + " under refinement");
    Potential out = tabulated_1d(std::move(coarse.x), std::move(coarse.v), info);
    return normalize(out, opt.scheme);
  }
  const auto coarse = std::make_shared<LipschitzEnvelope2d>(p, l, r, opt.points_2d);
  const LipschitzEnvelope2d fine(p, l, r, 2 * opt.points_2d - 1);
  double change = 0.0;
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 9; ++j) {
      const Eigen::Vector2d x(-r + 0.25 * r * i, -r + 0.25 * r * j);
      change = std::max(change, std::abs(coarse->value(x) - fine.value(x)));
    }
  }
  if (change > opt.tolerance_2d)
    throw Error(ErrorCode::GridTooCoarse, "inf-convolution changed by " + std::to_string(change) + " under refinement");
  return normalize(Potential(coarse, info), opt.scheme);
}

// ---------------------------------------------------------------------------
// Caffarelli reduction

namespace {

class DilatedModel final : public PotentialModel {
 public:
  DilatedModel(Potential inner, double dilation, double quad)
      : inner_(std::move(inner)), a_(dilation), k_(quad) {}

  int dim() const override { return inner_.dim(); }
  std::string name() const override { return "caffarelli(" + inner_.name() + ")"; }
  bool analytic_gradient() const override { return inner_.model().analytic_gradient(); }
  bool analytic_hessian() const override { return inner_.model().analytic_hessian(); }
  bool gradient_continuous() const override { return inner_.model().gradient_continuous(); }
  std::vector<double> breakpoints() const override {
    std::vector<double> b = inner_.model().breakpoints();
    for (double& x : b) x /= a_;
    return b;
  }

  double value(ConstVectorRef y) const override {
    return inner_.model().value(a_ * y) + 0.5 * k_ * y.squaredNorm();
  }
  double value_gradient(ConstVectorRef y, VectorRef g) const override {
    Vector gi(dim());
    const double v = inner_.model().value_gradient(a_ * y, gi);
    g = a_ * gi + k_ * y;
    return v + 0.5 * k_ * y.squaredNorm();
  }
  void hessian(ConstVectorRef y, MatrixRef h) const override {
    Matrix hi(dim(), dim());
    inner_.model().hessian(a_ * y, hi);
    h = a_ * a_ * hi;
    h.diagonal().array() += k_;
  }

 private:
  Potential inner_;
  double a_;
  double k_;
};

}  // namespace

CaffarelliReduction caffarelli_reduction(const Potential& p) {
  const double lambda = p.info().curvature_lower;
  if (!(lambda < 1.0)) throw Error(ErrorCode::LambdaTooLarge, "caffarelli_reduction needs lambda < 1");
  const double dilation = 1.0 / std::sqrt(1.0 - lambda);
  PotentialInfo info;
  info.curvature_lower = 0.0;
  if (lambda == 0.0) info = p.info();
  // tilde f(y) = a^n f(a y) e^{-(a^2 - 1)|y|^2 / 2}: same mass as f.
  const double shift = p.shift() - p.dim() * std::log(dilation);
  Potential out(std::make_shared<DilatedModel>(p, dilation, lambda / (1.0 - lambda)), info, shift);
  if (p.normalized()) out = out.as_normalized(shift, p.normalization_error());
  return {out, dilation};
}

}  // namespace lipmap
