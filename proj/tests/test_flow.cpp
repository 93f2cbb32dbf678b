#include "lipmap/bounds.hpp"
#include "lipmap/diagnostics.hpp"
#include "lipmap/flow.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace lipmap;
using testing::vec;

namespace {

FlowIntegrator gaussian_flow(double rho, FlowConfig cfg = {}) {
  return FlowIntegrator(SemigroupEvaluator(normalize(builtin(GaussianFamily{rho, 1}))), cfg);
}

FlowConfig adaptive() {
  FlowConfig c;
  c.stepper.method = StepMethod::DormandPrince;
  return c;
}

}  // namespace

TEST_SUITE("flow") {
  TEST_CASE("constant density gives the identity") {
    const FlowIntegrator fi{SemigroupEvaluator(builtin(GaussianFamily{0.0, 1}))};
    const TrajectoryRecord rec = fi.forward_flow(vec(0.8), 0.0, 5.0);
    for (const Vector& s : rec.states) CHECK(s[0] == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(fi.inverse_transport(vec(-1.1)).point[0] == doctest::Approx(-1.1).epsilon(1e-14));
    const JacobianResult j = fi.jacobian_along_flow(vec(0.3));
    CHECK((j.jacobian - Matrix::Identity(1, 1)).norm() < 1e-12);
    CHECK(j.lipschitz == doctest::Approx(1.0));
    const SampleSet set = fi.pushforward_samples(1000, 9);
    CHECK((set.outputs() - set.inputs()).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("gaussian forward trajectory has a closed form") {
    // x' = rho_t x integrates to x sqrt(1 + rho (1 - e^{-2t})).
    const double rho = 1.0;
    const TrajectoryRecord rec = gaussian_flow(rho).forward_flow(vec(1.0), 0.0, 8.0);
    for (std::size_t i = 0; i < rec.times.size(); ++i) {
      const double t = rec.times[i];
      CHECK(rec.states[i][0] == doctest::Approx(std::sqrt(1.0 + rho * -std::expm1(-2.0 * t))).epsilon(1e-8));
    }
    CHECK(rec.states.back()[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
  }

  TEST_CASE("trajectories do not cross") {
    const FlowIntegrator fi{SemigroupEvaluator(normalize(builtin(BumpFamily{vec(0.0), 0.5, 0.8})))};
    const TrajectoryRecord a = fi.forward_flow(vec(-0.1), 0.0, 6.0);
    const TrajectoryRecord b = fi.forward_flow(vec(0.05), 0.0, 6.0);
    REQUIRE(a.states.size() == b.states.size());
    for (std::size_t i = 0; i < a.states.size(); ++i) CHECK(a.states[i][0] < b.states[i][0]);
  }

  TEST_CASE("gaussian inverse transport") {
    FlowConfig c;
    c.t_max = 8.0;
    CHECK(gaussian_flow(1.0, c).inverse_transport(vec(2.0)).point[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-3));
  }

  TEST_CASE("gaussian Jacobian") {
    const FlowIntegrator fi = gaussian_flow(1.0);
    for (double y : {-2.0, 0.0, 1.5}) CHECK(std::abs(fi.jacobian_along_flow(vec(y)).lipschitz - std::sqrt(0.5)) < 1e-4);
  }

  TEST_CASE("adaptive and fixed steppers agree") {
    const Potential p = normalize(builtin(BumpFamily{vec(0.0), 0.5, 0.5}));
    const FlowIntegrator rk{SemigroupEvaluator(p)};
    const FlowIntegrator dp(SemigroupEvaluator(p), adaptive());
    for (double y : {-2.0, -0.3, 0.4, 2.5}) CHECK(std::abs(rk.inverse_transport(vec(y)).point[0] - dp.inverse_transport(vec(y)).point[0]) < 5e-7);
  }

  TEST_CASE("halving the step barely moves the map") {
    const Potential p = normalize(builtin(BumpFamily{vec(0.0), 0.5, 0.5}));
    FlowConfig fine;
    fine.stepper.steps = 1200;
    const FlowIntegrator a{SemigroupEvaluator(p)};
    const FlowIntegrator b(SemigroupEvaluator(p), fine);
    for (double y = -3.0; y <= 3.0; y += 0.5) CHECK(std::abs(a.inverse_transport(vec(y)).point[0] - b.inverse_transport(vec(y)).point[0]) < 2e-7);
  }

  TEST_CASE("fixed stepper converges at fourth order") {
    const Potential p = normalize(builtin(BumpFamily{vec(0.0), 0.5, 0.5}));
    double x[3];
    int i = 0;
    for (int steps : {600, 1200, 2400}) {
      FlowConfig c;
      c.stepper.steps = steps;
      x[i++] = FlowIntegrator(SemigroupEvaluator(p), c).inverse_transport(vec(1.0)).point[0];
    }
    const double ratio = (x[1] - x[0]) / (x[2] - x[1]);
    CHECK(ratio > 12.0);
    CHECK(ratio < 22.0);
  }

  TEST_CASE("bounded family Jacobians respect the integrated profile") {
    const Potential p = normalize(builtin(BumpFamily{vec(0.0), 0.5, 0.5}));
    const FlowIntegrator fi{SemigroupEvaluator(p)};
    const double km = km_lipschitz(combined_profile(p.info().curvature_lower, *p.info().oscillation));
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n;
    for (int k = 0; k < 20; ++k) CHECK(fi.jacobian_along_flow(vec(2.0 * n(rng))).lipschitz <= 1.05 * km);
  }

  TEST_CASE("log-concave targets expand along forward trajectories") {
    for (double rho : {0.5, 1.0}) {
      const FlowIntegrator fi = gaussian_flow(rho);
      const TrajectoryRecord a = fi.forward_flow(vec(-0.4), 0.0, 6.0);
      const TrajectoryRecord b = fi.forward_flow(vec(0.9), 0.0, 6.0);
      for (std::size_t i = 0; i < a.states.size(); ++i) CHECK(b.states[i][0] - a.states[i][0] >= 1.3 - 1e-12);
    }
  }

  TEST_CASE("gaussian pushforward variance") {
    const FlowIntegrator fi = gaussian_flow(1.0, adaptive());
    const SampleSet set = fi.pushforward_samples(20000, 42);
    REQUIRE(set.failures.empty());
    const Matrix out = set.outputs();
    const double mean = out.mean();
    const double var = (out.array() - mean).square().sum() / static_cast<double>(out.size() - 1);
    CHECK(std::abs(var - 0.5) < 0.02);
    std::vector<double> xs(out.data(), out.data() + out.size());
    CHECK(ks_distance(xs, Distribution1d(fi.evaluator().potential())) < 0.015);
  }

  TEST_CASE("samples depend only on seed and index") {
    const FlowIntegrator fi{SemigroupEvaluator(normalize(builtin(BumpFamily{vec(0.0), 0.5, 0.5})))};
    const SampleSet a = fi.pushforward_samples(64, 5, true, 1);
    const SampleSet b = fi.pushforward_samples(64, 5, true, 3);
    const SampleSet c = fi.pushforward_samples(32, 5, true, 2);
    REQUIRE(a.pairs.size() == 64);
    for (std::size_t i = 0; i < a.pairs.size(); ++i) {
      CHECK(a.pairs[i].index == static_cast<long>(i));
      CHECK(a.pairs[i].output[0] == b.pairs[i].output[0]);
      CHECK(a.pairs[i].jacobian_norm == b.pairs[i].jacobian_norm);
      if (i < c.pairs.size()) CHECK(a.pairs[i].output[0] == c.pairs[i].output[0]);
    }
  }

  TEST_CASE("sorted inputs give sorted outputs and bounded slopes") {
    const Potential p = normalize(builtin(BumpFamily{vec(0.0), 0.5, 0.5}));
    const FlowIntegrator fi(SemigroupEvaluator(p), adaptive());
    const SampleSet set = fi.pushforward_samples(2000, 8);
    std::vector<std::pair<double, double>> pts;
    for (const auto& s : set.pairs) pts.emplace_back(s.input[0], s.output[0]);
    std::sort(pts.begin(), pts.end());
    const LipschitzBound lb = lipschitz_bound(2.0, 0.5);
    const double km = km_lipschitz(combined_profile(2.0, 0.5));
    for (std::size_t i = 1; i < pts.size(); ++i) {
      CHECK(pts[i].second >= pts[i - 1].second);
      if (pts[i].first > pts[i - 1].first) {
        const double slope = (pts[i].second - pts[i - 1].second) / (pts[i].first - pts[i - 1].first);
        CHECK(slope <= lb.l_theorem);
        CHECK(slope <= 1.05 * km);
      }
    }
  }

  TEST_CASE("truncation certificate") {
    const Potential bump = normalize(builtin(BumpFamily{vec(0.0), 0.5, 0.5}));
    const FlowIntegrator fi{SemigroupEvaluator(bump)};
    const TransportResult r = fi.inverse_transport(vec(0.5));
    CHECK(r.certified);
    CHECK(r.error_bound == doctest::Approx(std::exp(-12.0) * *bump.info().grad_sup_norm));
    const TransportResult g = gaussian_flow(1.0).inverse_transport(vec(0.5));
    CHECK_FALSE(g.certified);
    CHECK(std::isinf(g.error_bound));
  }

  TEST_CASE("two-dimensional transport") {
    const FlowIntegrator fi(SemigroupEvaluator(normalize(builtin(GaussianFamily{1.0, 2})), QuadratureScheme::gauss_hermite(40)),
                            adaptive());
    const JacobianResult j = fi.jacobian_along_flow(testing::vec(0.8, -1.0));
    CHECK((j.point - testing::vec(0.8, -1.0) / std::sqrt(2.0)).norm() < 1e-6);
    CHECK((j.jacobian - Matrix::Identity(2, 2) / std::sqrt(2.0)).norm() < 1e-6);
  }

  TEST_CASE("adaptive stepper reports exhausted budgets") {
    FlowConfig c = adaptive();
    c.stepper.max_steps = 3;
    const FlowIntegrator fi(SemigroupEvaluator(normalize(builtin(BumpFamily{vec(0.0), 0.5, 0.5}))), c);
    try {
      fi.inverse_transport(vec(0.5));
      FAIL("expected STEP_FAILURE");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::StepFailure);
    }
  }
}
