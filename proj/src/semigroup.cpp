#include "lipmap/semigroup.hpp"

#include "lipmap/linalg.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

namespace lipmap {

namespace {

struct Scratch {
  Matrix pts;
  Vector v;
  Matrix g;
  Eigen::ArrayXd a;
  Eigen::ArrayXd w;
};

/// Per-thread buffers, one set per nesting level so that a potential which
/// itself evaluates a semigroup does not clobber the caller's buffers.
class ScratchLease {
 public:
  ScratchLease() {
    Pool& p = pool();
    if (p.depth == p.slots.size()) p.slots.push_back(std::make_unique<Scratch>());
    s_ = p.slots[p.depth++].get();
  }
  ~ScratchLease() { --pool().depth; }
  ScratchLease(const ScratchLease&) = delete;
  ScratchLease& operator=(const ScratchLease&) = delete;

  Scratch& get() { return *s_; }

 private:
  struct Pool {
    std::vector<std::unique_ptr<Scratch>> slots;
    std::size_t depth = 0;
  };
  static Pool& pool() {
    thread_local Pool p;
    return p;
  }
  Scratch* s_;
};

}  // namespace

SemigroupEvaluator::SemigroupEvaluator(Potential potential, QuadratureScheme scheme, SemigroupOptions opt)
    : potential_(std::move(potential)), scheme_(scheme), opt_(opt) {
  if (!(opt_.floor > 0.0)) throw Error(ErrorCode::BadParams, "density floor must be positive");
  full_nodes_ = make_node_set(scheme_, potential_.dim());
  nodes_ = full_nodes_;
  const auto& osc = potential_.info().oscillation;
  if (opt_.prune && osc && scheme_.kind == QuadratureScheme::Kind::GaussHermite)
    nodes_ = prune_node_set(*full_nodes_, 1e-16 * std::exp(-*osc));
  log_floor_ = std::log(opt_.floor);
  use_gradients_ = potential_.model().analytic_gradient();
}

HessianRoute SemigroupEvaluator::resolve(HessianRoute route, double t) const {
  if (route != HessianRoute::Auto) return route;
  if (t == 0.0) return HessianRoute::Commute;
  const auto& m = potential_.model();
  return (m.analytic_hessian() && m.gradient_continuous()) ? HessianRoute::Commute : HessianRoute::Hermite;
}

SemigroupPoint SemigroupEvaluator::evaluate(ConstVectorRef x, double t, bool with_hessian,
                                            HessianRoute route) const {
  if (!(t >= 0.0) || !std::isfinite(t)) throw Error(ErrorCode::BadParams, "semigroup time must be finite and >= 0");
  if (x.size() != dim()) throw Error(ErrorCode::BadParams, "point has the wrong dimension");
  const int n = dim();
  route = resolve(route, t);
  SemigroupPoint out;
  out.drift.resize(n);

  if (t == 0.0) {
    if (with_hessian && route == HessianRoute::Hermite)
      throw Error(ErrorCode::TZeroHermite, "the Hermite route divides by e^{2t} - 1 and needs t > 0");
    out.log_f = -potential_.value_gradient(x, out.drift);
    if (out.log_f <= log_floor_) throw Error(ErrorCode::Underflow, "f(x) is below the density floor");
    if (with_hessian) out.hess_v = potential_.hessian(x);
    return out;
  }

  const NodeSet& nodes = *nodes_;
  ScratchLease lease;
  Scratch& s = lease.get();
  const long m = nodes.size();
  const double et = std::exp(-t);
  const double sigma = std::sqrt(-std::expm1(-2.0 * t));
  const bool need_grads = use_gradients_ || (with_hessian && route == HessianRoute::Commute);

  s.pts.resize(n, m);
  s.pts.noalias() = sigma * nodes.points;
  s.pts.colwise() += et * x;
  s.v.resize(m);
  if (need_grads) {
    s.g.resize(n, m);
    potential_.values_gradients(s.pts, s.v, s.g);
  } else {
    potential_.values(s.pts, s.v);
  }
  s.a = nodes.log_weights.array() - s.v.array();
  const double amax = s.a.maxCoeff();
  if (std::isnan(amax)) throw Error(ErrorCode::NonIntegrable, "potential returned NaN at a quadrature node");
  if (amax == -std::numeric_limits<double>::infinity())
    throw Error(ErrorCode::Underflow, "f_t vanishes on every quadrature node");
  s.w = (s.a - amax).exp();
  const double sum = s.w.sum();
  out.log_f = amax + std::log(sum);
  if (out.log_f <= log_floor_) throw Error(ErrorCode::Underflow, "P_t f(x) is below the density floor");
  const double inv = 1.0 / sum;

  Vector mean_z;
  if (use_gradients_) {
    out.drift.noalias() = s.g * s.w.matrix();
    out.drift *= et * inv;
  } else {
    mean_z = nodes.points * s.w.matrix() * inv;
    out.drift = -(et / sigma) * mean_z;
  }

  if (with_hessian) {
    if (route == HessianRoute::Commute) {
      // D^2 V_t = e^{-2t} (E_w[D^2 V] - Cov_w(grad V))
      Matrix mean_h = Matrix::Zero(n, n);
      Matrix h(n, n);
      for (long k = 0; k < m; ++k) {
        const double wk = s.w[k] * inv;
        if (wk < 1e-20) continue;
        potential_.hessian(s.pts.col(k), h);
        mean_h += wk * h;
      }
      const Vector mean_g = s.g * s.w.matrix() * inv;
      const Matrix second = s.g * s.w.matrix().asDiagonal() * s.g.transpose() * inv;
      out.hess_v = et * et * (mean_h - (second - mean_g * mean_g.transpose()));
    } else {
      // D^2 V_t = (I - Cov_w(Z)) / (e^{2t} - 1)
      if (mean_z.size() == 0) mean_z = nodes.points * s.w.matrix() * inv;
      const Matrix second = nodes.points * s.w.matrix().asDiagonal() * nodes.points.transpose() * inv;
      out.hess_v = (Matrix::Identity(n, n) - (second - mean_z * mean_z.transpose())) / std::expm1(2.0 * t);
    }
  }
  return out;
}

double SemigroupEvaluator::log_pt_f(ConstVectorRef x, double t) const {
  if (t == 0.0) {
    const double lf = -potential_.value(x);
    if (lf <= log_floor_) throw Error(ErrorCode::Underflow, "f(x) is below the density floor");
    return lf;
  }
  if (!(t > 0.0) || !std::isfinite(t)) throw Error(ErrorCode::BadParams, "semigroup time must be finite and >= 0");
  const NodeSet& nodes = *nodes_;
  ScratchLease lease;
  Scratch& s = lease.get();
  const long m = nodes.size();
  const double et = std::exp(-t);
  const double sigma = std::sqrt(-std::expm1(-2.0 * t));
  s.pts.resize(dim(), m);
  s.pts.noalias() = sigma * nodes.points;
  s.pts.colwise() += et * x;
  s.v.resize(m);
  potential_.values(s.pts, s.v);
  s.a = nodes.log_weights.array() - s.v.array();
  const double amax = s.a.maxCoeff();
  if (std::isnan(amax)) throw Error(ErrorCode::NonIntegrable, "potential returned NaN at a quadrature node");
  const double lf = amax + std::log((s.a - amax).exp().sum());
  if (!(lf > log_floor_)) throw Error(ErrorCode::Underflow, "P_t f(x) is below the density floor");
  return lf;
}

double SemigroupEvaluator::pt_f(ConstVectorRef x, double t) const { return std::exp(log_pt_f(x, t)); }

Vector SemigroupEvaluator::grad_pt_f(ConstVectorRef x, double t) const {
  const SemigroupPoint p = evaluate(x, t, false);
  return -std::exp(p.log_f) * p.drift;
}

Matrix SemigroupEvaluator::hess_pt_f(ConstVectorRef x, double t, HessianRoute route) const {
  const SemigroupPoint p = evaluate(x, t, true, route);
  return std::exp(p.log_f) * (p.drift * p.drift.transpose() - p.hess_v);
}

Vector SemigroupEvaluator::drift(ConstVectorRef x, double t) const { return evaluate(x, t, false).drift; }

void SemigroupEvaluator::drift(ConstVectorRef x, double t, VectorRef out) const {
  out = evaluate(x, t, false).drift;
}

Matrix SemigroupEvaluator::potential_hessian(ConstVectorRef x, double t, HessianRoute route) const {
  return evaluate(x, t, true, route).hess_v;
}

double SemigroupEvaluator::log_concavity(ConstVectorRef x, double t, HessianRoute route) const {
  return -linalg::min_eigenvalue(potential_hessian(x, t, route));
}

double SemigroupEvaluator::concavity_profile(const GridSpec& grid, double t, HessianRoute route) const {
  double worst = -std::numeric_limits<double>::infinity();
  for (long k = 0; k < grid.size(); ++k) worst = std::max(worst, log_concavity(grid.point(k), t, route));
  return worst;
}

double SemigroupEvaluator::apply(const std::function<double(ConstVectorRef)>& g, ConstVectorRef x, double t) const {
  if (!(t >= 0.0)) throw Error(ErrorCode::BadParams, "semigroup time must be >= 0");
  if (t == 0.0) return g(x);
  const NodeSet& nodes = *full_nodes_;
  const double et = std::exp(-t);
  const double sigma = std::sqrt(-std::expm1(-2.0 * t));
  Vector y(dim());
  double acc = 0.0;
  for (long k = 0; k < nodes.size(); ++k) {
    y = et * x + sigma * nodes.points.col(k);
    acc += nodes.weights[k] * g(y);
  }
  return acc;
}

}  // namespace lipmap
