#include "lipmap/flow.hpp"

#include "lipmap/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <optional>
#include <thread>

namespace lipmap {

int default_threads() {
  if (const char* env = std::getenv("LIPMAP_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Matrix SampleSet::inputs() const {
  if (pairs.empty()) return {};
  Matrix m(pairs.front().input.size(), static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t k = 0; k < pairs.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = pairs[k].input;
  return m;
}

Matrix SampleSet::outputs() const {
  if (pairs.empty()) return {};
  Matrix m(pairs.front().output.size(), static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t k = 0; k < pairs.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = pairs[k].output;
  return m;
}

FlowIntegrator::FlowIntegrator(SemigroupEvaluator evaluator, FlowConfig cfg) : ev_(std::move(evaluator)), cfg_(cfg) {
  if (!(cfg_.t_max > 0.0)) throw Error(ErrorCode::BadParams, "t_max must be positive");
  if (cfg_.stepper.steps < 1) throw Error(ErrorCode::BadParams, "RK4 needs at least one step");
  if (!(cfg_.stepper.abs_tol > 0.0) || !(cfg_.stepper.rel_tol >= 0.0))
    throw Error(ErrorCode::BadParams, "stepper tolerances must be positive");
}

double FlowIntegrator::truncation_bound() const {
  const auto& g = ev_.potential().info().grad_sup_norm;
  if (!g) return std::numeric_limits<double>::infinity();
  return std::exp(-cfg_.t_max) * *g;
}

void FlowIntegrator::rhs(double t, const Vector& u, bool with_jacobian, Vector& du) const {
  const int n = ev_.dim();
  try {
    if (!with_jacobian) {
      ev_.drift(u, t, du);
      return;
    }
    const SemigroupPoint p = ev_.evaluate(u.head(n), t, true, cfg_.route);
    du.head(n) = p.drift;
    const Eigen::Map<const Matrix> k(u.data() + n, n, n);
    Eigen::Map<Matrix> dk(du.data() + n, n, n);
    dk.noalias() = p.hess_v * k;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Underflow)
      throw Error(ErrorCode::DriftUnderflow, std::string("drift underflow at t = ") + std::to_string(t) + ": " + e.what());
    throw;
  }
}

FlowIntegrator::Outcome FlowIntegrator::integrate(const Vector& u0, double t0, double t1, bool with_jacobian,
                                                  TrajectoryRecord* rec) const {
  const int n = ev_.dim();
  const Eigen::Index size = u0.size();
  Outcome out;
  out.state = u0;
  auto record = [&](double t, const Vector& u, double err) {
    if (!rec) return;
    rec->times.push_back(t);
    rec->states.push_back(u.head(n));
    if (with_jacobian) rec->jacobians.push_back(Eigen::Map<const Matrix>(u.data() + n, n, n));
    rec->errors.push_back(err);
  };
  record(t0, out.state, 0.0);
  if (t1 == t0) return out;

  Vector& u = out.state;
  const StepperConfig& sc = cfg_.stepper;

  if (sc.method == StepMethod::Rk4) {
    const double h_nominal = cfg_.t_max / sc.steps;
    const long steps = std::max(1L, static_cast<long>(std::ceil(std::abs(t1 - t0) / h_nominal - 1e-9)));
    const double h = (t1 - t0) / static_cast<double>(steps);
    Vector k1(size), k2(size), k3(size), k4(size), tmp(size);
    for (long i = 0; i < steps; ++i) {
      const double t = t0 + h * static_cast<double>(i);
      const double tn = (i + 1 == steps) ? t1 : t0 + h * static_cast<double>(i + 1);
      rhs(t, u, with_jacobian, k1);
      tmp = u + 0.5 * h * k1;
      rhs(t + 0.5 * h, tmp, with_jacobian, k2);
      tmp = u + 0.5 * h * k2;
      rhs(t + 0.5 * h, tmp, with_jacobian, k3);
      tmp = u + h * k3;
      rhs(tn, tmp, with_jacobian, k4);
      u += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      record(tn, u, 0.0);
    }
    out.steps = steps;
    return out;
  }

  // Dormand-Prince 5(4) with FSAL and a standard step controller.
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;

  const double span = t1 - t0;
  const double dir = span > 0 ? 1.0 : -1.0;
  double t = t0;
  double h = dir * std::min(std::abs(span), 0.05);
  Vector k1(size), k2(size), k3(size), k4(size), k5(size), k6(size), k7(size), tmp(size), un(size), err(size);
  rhs(t, u, with_jacobian, k1);
  long attempts = 0;
  while (dir * (t1 - t) > 0.0) {
    if (++attempts > sc.max_steps)
      throw Error(ErrorCode::StepFailure, "adaptive stepper exceeded max_steps = " + std::to_string(sc.max_steps));
    if (dir * (t + h - t1) > 0.0) h = t1 - t;
    tmp = u + h * a21 * k1;
    rhs(t + c2 * h, tmp, with_jacobian, k2);
    tmp = u + h * (a31 * k1 + a32 * k2);
    rhs(t + c3 * h, tmp, with_jacobian, k3);
    tmp = u + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(t + c4 * h, tmp, with_jacobian, k4);
    tmp = u + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(t + c5 * h, tmp, with_jacobian, k5);
    tmp = u + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    const double tn = (dir * (t + h - t1) >= 0.0) ? t1 : t + h;
    rhs(tn, tmp, with_jacobian, k6);
    un = u + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    rhs(tn, un, with_jacobian, k7);
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double norm = 0.0;
    for (Eigen::Index i = 0; i < size; ++i) {
      const double scale = sc.abs_tol + sc.rel_tol * std::max(std::abs(u[i]), std::abs(un[i]));
      norm = std::max(norm, std::abs(err[i]) / scale);
    }
    if (!std::isfinite(norm)) throw Error(ErrorCode::StepFailure, "non-finite error estimate");
    if (norm <= 1.0) {
      t = tn;
      u = un;
      k1 = k7;
      ++out.steps;
      record(t, u, err.lpNorm<Eigen::Infinity>());
      h *= std::clamp(0.9 * std::pow(std::max(norm, 1e-10), -0.2), 0.2, 5.0);
    } else {
      ++out.rejected;
      h *= std::max(0.2, 0.9 * std::pow(norm, -0.2));
    }
    if (std::abs(h) < 1e-14 * std::max(1.0, std::abs(t)))
      throw Error(ErrorCode::StepFailure, "step size underflow at t = " + std::to_string(t));
  }
  if (rec) rec->rejected = out.rejected;
  return out;
}

TrajectoryRecord FlowIntegrator::forward_flow(ConstVectorRef x, double t0, double t1, bool with_jacobian) const {
  if (!(t0 >= 0.0) || !(t1 >= t0)) throw Error(ErrorCode::BadParams, "forward_flow needs 0 <= t0 <= t1");
  const int n = ev_.dim();
  Vector u(with_jacobian ? n + n * n : n);
  u.head(n) = x;
  if (with_jacobian) Eigen::Map<Matrix>(u.data() + n, n, n).setIdentity();
  TrajectoryRecord rec;
  integrate(u, t0, t1, with_jacobian, &rec);
  return rec;
}

TransportResult FlowIntegrator::inverse_transport(ConstVectorRef y) const {
  const Outcome o = integrate(Vector(y), cfg_.t_max, 0.0, false, nullptr);
  TransportResult r;
  r.point = o.state;
  r.error_bound = truncation_bound();
  r.certified = std::isfinite(r.error_bound);
  r.steps = o.steps;
  r.rejected = o.rejected;
  return r;
}

JacobianResult FlowIntegrator::jacobian_along_flow(ConstVectorRef y) const {
  const int n = ev_.dim();
  Vector u(n + n * n);
  u.head(n) = y;
  Eigen::Map<Matrix>(u.data() + n, n, n).setIdentity();
  const Outcome o = integrate(u, cfg_.t_max, 0.0, true, nullptr);
  JacobianResult r;
  r.point = o.state.head(n);
  r.jacobian = Eigen::Map<const Matrix>(o.state.data() + n, n, n);
  r.lipschitz = linalg::operator_norm(r.jacobian);
  r.error_bound = truncation_bound();
  r.certified = std::isfinite(r.error_bound);
  return r;
}

SampleSet FlowIntegrator::pushforward_samples(long count, std::uint64_t seed, bool with_jacobian, int threads) const {
  if (count < 1) throw Error(ErrorCode::BadParams, "sample count must be >= 1");
  const int n = ev_.dim();
  const CounterNormal stream(seed);
  std::vector<std::optional<SamplePair>> done(static_cast<std::size_t>(count));
  std::vector<std::optional<SampleFailure>> failed(static_cast<std::size_t>(count));

  auto work = [&](long first, long stride) {
    Vector z(n);
    for (long i = first; i < count; i += stride) {
      stream.vector(static_cast<std::uint64_t>(i), z);
      try {
        SamplePair p;
        p.index = i;
        p.input = z;
        if (with_jacobian) {
          const JacobianResult j = jacobian_along_flow(z);
          p.output = j.point;
          p.jacobian_norm = j.lipschitz;
          p.error_bound = j.error_bound;
        } else {
          const TransportResult t = inverse_transport(z);
          p.output = t.point;
          p.jacobian_norm = std::numeric_limits<double>::quiet_NaN();
          p.error_bound = t.error_bound;
        }
        done[static_cast<std::size_t>(i)] = std::move(p);
      } catch (const Error& e) {
        failed[static_cast<std::size_t>(i)] = SampleFailure{i, to_string(e.code()), e.what()};
      }
    }
  };

  const int workers = static_cast<int>(std::min<long>(threads > 0 ? threads : default_threads(), count));
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& th : pool) th.join();
  }

  SampleSet set;
  set.certified = std::isfinite(truncation_bound());
  for (long i = 0; i < count; ++i) {
    if (done[static_cast<std::size_t>(i)]) set.pairs.push_back(std::move(*done[static_cast<std::size_t>(i)]));
    if (failed[static_cast<std::size_t>(i)]) set.failures.push_back(*failed[static_cast<std::size_t>(i)]);
  }
  return set;
}

}  // namespace lipmap
