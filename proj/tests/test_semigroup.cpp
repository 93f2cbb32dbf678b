#include "lipmap/bounds.hpp"
#include "lipmap/potentials.hpp"
#include "lipmap/semigroup.hpp"
#include "support.hpp"

#include <doctest.h>

#include <random>

using namespace lipmap;
using testing::vec;

namespace {

// f = e^{-rho x^2 / 2}: P_t f(x) = (1 + rho s2)^{-1/2} exp(-rho_t x^2 / 2),
// s2 = 1 - e^{-2t}, rho_t = rho e^{-2t} / (1 + rho s2).
struct GaussianOracle {
  double rho;
  double s2(double t) const { return -std::expm1(-2.0 * t); }
  double rho_t(double t) const { return rho * std::exp(-2.0 * t) / (1.0 + rho * s2(t)); }
  double f(double x, double t) const { return std::exp(-0.5 * rho_t(t) * x * x) / std::sqrt(1.0 + rho * s2(t)); }
};

}  // namespace

TEST_SUITE("semigroup") {
  TEST_CASE("constant function is a fixed point") {
    const SemigroupEvaluator ev(builtin(GaussianFamily{0.0, 1}));
    for (double t : {0.0, 0.3, 2.0}) {
      CHECK(ev.pt_f(vec(1.3), t) == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(ev.grad_pt_f(vec(1.3), t).norm() < 1e-14);
      CHECK(ev.drift(vec(-0.4), t).norm() < 1e-14);
    }
    CHECK(ev.hess_pt_f(vec(0.7), 0.5, HessianRoute::Hermite).norm() < 1e-12);
  }

  TEST_CASE("linear integrand decays like e^{-t}") {
    const SemigroupEvaluator ev(builtin(GaussianFamily{0.0, 1}));
    for (double t : {0.1, 1.0, 3.0})
      CHECK(ev.apply([](ConstVectorRef y) { return y[0]; }, vec(2.0), t) == doctest::Approx(2.0 * std::exp(-t)).epsilon(1e-13));
  }

  TEST_CASE("gaussian closed forms") {
    for (double rho : {-0.5, 0.5, 1.0, 3.0}) {
      const GaussianOracle o{rho};
      const SemigroupEvaluator ev(builtin(GaussianFamily{rho, 1}));
      for (double t : {0.05, 0.3, 1.0, 4.0}) {
        for (double x : {-3.0, -0.5, 0.0, 1.0, 2.5}) {
          CHECK(ev.pt_f(vec(x), t) == doctest::Approx(o.f(x, t)).epsilon(1e-8));
          const double g = -o.rho_t(t) * x * o.f(x, t);
          CHECK(std::abs(ev.grad_pt_f(vec(x), t)[0] - g) <= 1e-8 * std::max(std::abs(g), 1e-12));
          const double d = o.rho_t(t) * x;
          CHECK(std::abs(ev.drift(vec(x), t)[0] - d) <= 1e-7 * std::max(std::abs(d), 1e-12));
          CHECK(ev.log_concavity(vec(x), t) == doctest::Approx(-o.rho_t(t)).epsilon(1e-8));
        }
      }
    }
  }

  TEST_CASE("t = 0 uses f itself") {
    const Potential p = builtin(BumpFamily{vec(0.0), 0.5, 0.5});
    const SemigroupEvaluator ev(p);
    CHECK(ev.pt_f(vec(0.2), 0.0) == p.density(vec(0.2)));
    CHECK_THROWS_AS(ev.hess_pt_f(vec(0.2), 0.0, HessianRoute::Hermite), Error);
    try {
      ev.hess_pt_f(vec(0.2), 0.0, HessianRoute::Hermite);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TZeroHermite);
    }
  }

  TEST_CASE("bump gradient matches finite differences") {
    const SemigroupEvaluator ev(builtin(BumpFamily{vec(0.3), 0.6, 0.8}));
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ux(-3.0, 3.0), ut(0.05, 2.0);
    for (int k = 0; k < 50; ++k) {
      const double x = ux(rng), t = ut(rng), h = 1e-5;
      const double fd = (ev.pt_f(vec(x + h), t) - ev.pt_f(vec(x - h), t)) / (2 * h);
      const double g = ev.grad_pt_f(vec(x), t)[0];
      CHECK(std::abs(fd - g) <= 1e-5 * std::max(std::abs(g), 1e-3));
    }
  }

  TEST_CASE("Hessian routes agree on the bump") {
    const SemigroupEvaluator ev(builtin(BumpFamily{vec(0.0, 0.2), 0.7, 0.6}));
    for (double x : {-1.5, 0.0, 0.4, 2.0}) {
      const Vector p = testing::vec(x, 0.5 * x);
      const Matrix a = ev.hess_pt_f(p, 0.5, HessianRoute::Commute);
      const Matrix b = ev.hess_pt_f(p, 0.5, HessianRoute::Hermite);
      CHECK((a - b).cwiseAbs().maxCoeff() < 1e-6);
    }
  }

  TEST_CASE("Hermite route obeys the sup-norm Hessian bound") {
    const Potential p = builtin(BumpFamily{vec(0.0), 0.5, -0.9});
    const SemigroupEvaluator ev(p);
    const double fmax = std::exp(0.9);
    for (double t : {0.05, 0.2, 1.0}) {
      for (double x = -3.0; x <= 3.0; x += 0.25) {
        const double h = ev.hess_pt_f(vec(x), t, HessianRoute::Hermite).norm();
        CHECK(h <= fmax / std::expm1(2.0 * t) + 1e-8);
      }
    }
  }

  TEST_CASE("concavity profile") {
    const GridSpec grid = GridSpec::uniform(1, -3.0, 3.0, 25);
    SUBCASE("gaussian rho -1/2 is Lemma 5 tight") {
      const SemigroupEvaluator ev(builtin(GaussianFamily{-0.5, 1}));
      for (double t : {0.0, 0.1, 0.5, 2.0})
        CHECK(ev.concavity_profile(grid, t) == doctest::Approx(lemma5_lambda(0.5, t)).epsilon(1e-6));
    }
    SUBCASE("log-concave stays log-concave") {
      const SemigroupEvaluator ev(builtin(GaussianFamily{1.0, 1}));
      for (double t : {0.0, 0.1, 0.5, 2.0}) CHECK(ev.concavity_profile(grid, t) <= 1e-8);
    }
    SUBCASE("sharpness example at its critical scale") {
      const double T = 6.0, t = 0.5 * std::log(2.0);
      const SemigroupEvaluator ev(builtin(SharpnessFamily::at_time(T, t)), QuadratureScheme::gauss_hermite(512));
      CHECK(ev.log_concavity(vec(0.0), t) >= 0.9 * T * T / (3.0 * std::expm1(2.0 * t)));
    }
  }

  TEST_CASE("semigroup property") {
    const SemigroupEvaluator ev(builtin(BumpFamily{vec(0.0), 0.5, 0.7}));
    const double t = 0.4, s = 0.3;
    const Potential ft = from_function(1, "f_t", [&](ConstVectorRef x) { return -ev.log_pt_f(x, t); });
    const SemigroupEvaluator ev_t(ft);
    double worst = 0.0;
    for (double x = -4.0; x <= 4.0; x += 0.2) worst = std::max(worst, std::abs(ev.pt_f(vec(x), s + t) - ev_t.pt_f(vec(x), s)));
    CHECK(worst < 1e-6);
  }

  TEST_CASE("L-infinity contraction and long-time limit") {
    const Potential p = builtin(BumpFamily{vec(0.5), 0.7, -0.8});
    const SemigroupEvaluator ev(p);
    const double mean = ev.apply([&](ConstVectorRef y) { return p.density(y); }, vec(0.0), 40.0);
    double fmax = 0.0, fmin = INFINITY;
    for (double x = -4.0; x <= 4.0; x += 0.05) {
      fmax = std::max(fmax, p.density(vec(x)));
      fmin = std::min(fmin, p.density(vec(x)));
    }
    for (double t : {0.1, 0.5, 2.0}) {
      for (double x = -4.0; x <= 4.0; x += 0.05) {
        const double f = ev.pt_f(vec(x), t);
        CHECK(f <= fmax + 1e-10);
        CHECK(f >= fmin - 1e-10);
      }
    }
    for (double x = -4.0; x <= 4.0; x += 0.5) CHECK(std::abs(ev.pt_f(vec(x), 10.0) - mean) < 1e-4);
  }

  TEST_CASE("Lemma 5 and Lemma 6 grid bounds on builtins") {
    const GridSpec grid = GridSpec::uniform(1, -4.0, 4.0, 41);
    const std::vector<Potential> ps = {builtin(BumpFamily{vec(0.0), 0.5, 0.5}), builtin(BumpFamily{vec(0.5), 0.7, -0.8}),
                                       builtin(GaussianFamily{-0.3, 1})};
    for (const Potential& p : ps) {
      const SemigroupEvaluator ev(p);
      const double lambda = p.info().curvature_lower;
      for (double t : {0.0, 0.05, 0.2, 0.5, 1.0, 2.0}) {
        const double measured = ev.concavity_profile(grid, t);
        if (lambda * -std::expm1(-2.0 * t) < 0.9) CHECK(measured <= lemma5_lambda(lambda, t) + 1e-4);
        if (p.info().oscillation && t > 0.0) CHECK(measured <= lemma6_lambda(*p.info().oscillation, t) + 1e-4);
      }
    }
  }

  TEST_CASE("deep tails underflow") {
    SemigroupOptions opt;
    opt.floor = 1e-3;
    const SemigroupEvaluator ev(builtin(GaussianFamily{3.0, 1}), {}, opt);
    try {
      ev.pt_f(vec(10.0), 0.01);
      FAIL("expected UNDERFLOW");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Underflow);
    }
  }

  TEST_CASE("two-dimensional gaussian drift") {
    const GaussianOracle o{1.0};
    const SemigroupEvaluator ev(builtin(GaussianFamily{1.0, 2}), QuadratureScheme::gauss_hermite(48));
    const Vector x = testing::vec(0.7, -1.2);
    const Vector d = ev.drift(x, 0.3);
    CHECK((d - o.rho_t(0.3) * x).norm() < 1e-9);
  }
}
