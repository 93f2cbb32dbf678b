#pragma once

#include "lipmap/semigroup.hpp"
#include "lipmap/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lipmap {

enum class StepMethod { Rk4, DormandPrince };

struct StepperConfig {
  StepMethod method = StepMethod::Rk4;
  int steps = 600;          ///< fixed-step RK4 steps over [0, t_max]
  double abs_tol = 1e-9;    ///< adaptive only
  double rel_tol = 1e-9;    ///< adaptive only
  long max_steps = 100000;  ///< adaptive only, accepted plus rejected
};

struct FlowConfig {
  double t_max = 12.0;
  StepperConfig stepper;
  HessianRoute route = HessianRoute::Auto;
};

/// States (and optionally Jacobians) at every accepted step.
struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<Matrix> jacobians;
  std::vector<double> errors;  ///< local error estimate per step (0 for RK4)
  long rejected = 0;
};

struct TransportResult {
  Vector point;
  /// e^{-t_max} ||grad V||_inf, or +inf when no gradient bound is declared.
  double error_bound = 0.0;
  bool certified = false;
  long steps = 0;
  long rejected = 0;
};

struct JacobianResult {
  Vector point;
  Matrix jacobian;
  double lipschitz = 0.0;  ///< operator norm of `jacobian`
  double error_bound = 0.0;
  bool certified = false;
};

struct SamplePair {
  long index = 0;
  Vector input;
  Vector output;
  double jacobian_norm = 0.0;  ///< NaN unless Jacobians were requested
  double error_bound = 0.0;
};

struct SampleFailure {
  long index = 0;
  std::string code;
  std::string message;
};

struct SampleSet {
  std::vector<SamplePair> pairs;  ///< successful samples, by index
  std::vector<SampleFailure> failures;
  bool certified = false;

  Matrix inputs() const;
  Matrix outputs() const;
};

/// Heat-flow map: dS/dt = grad V_t(S). The transport T pushing gamma onto
/// f dgamma is approximated by integrating backward from (t_max, y) to 0.
class FlowIntegrator {
 public:
  explicit FlowIntegrator(SemigroupEvaluator evaluator, FlowConfig cfg = {});

  const SemigroupEvaluator& evaluator() const { return ev_; }
  const FlowConfig& config() const { return cfg_; }
  /// e^{-t_max} ||grad V||_inf (+inf if undeclared).
  double truncation_bound() const;

  TrajectoryRecord forward_flow(ConstVectorRef x, double t0, double t1, bool with_jacobian = false) const;
  TransportResult inverse_transport(ConstVectorRef y) const;
  JacobianResult jacobian_along_flow(ConstVectorRef y) const;

  /// Maps `count` standard normal draws of stream `seed`. Threads default
  /// to LIPMAP_THREADS or the hardware concurrency; output does not depend
  /// on the thread count.
  SampleSet pushforward_samples(long count, std::uint64_t seed, bool with_jacobian = false,
                                int threads = 0) const;

 private:
  struct Outcome {
    Vector state;
    long steps = 0;
    long rejected = 0;
  };

  Outcome integrate(const Vector& u0, double t0, double t1, bool with_jacobian, TrajectoryRecord* rec) const;
  void rhs(double t, const Vector& u, bool with_jacobian, Vector& du) const;

  SemigroupEvaluator ev_;
  FlowConfig cfg_;
};

/// Worker count from LIPMAP_THREADS, else the hardware concurrency.
int default_threads();

}  // namespace lipmap
