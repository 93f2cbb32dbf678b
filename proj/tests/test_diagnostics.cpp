#include "lipmap/bounds.hpp"
#include "lipmap/diagnostics.hpp"
#include "lipmap/quadrature.hpp"
#include "support.hpp"

#include <doctest.h>

#include <numbers>
#include <random>

using namespace lipmap;
using testing::vec;

TEST_SUITE("diagnostics") {
  TEST_CASE("monotone rearrangement") {
    const double q = normal_cdf(1.0);
    CHECK(monotone_rearrangement_1d(normalize(builtin(GaussianFamily{0.0, 1})), q) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(monotone_rearrangement_1d(normalize(builtin(GaussianFamily{1.0, 1})), q) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  }

  TEST_CASE("linear tail quantile against the closed form") {
    // Beyond 1 the density is e^{1/2 - x} / sqrt(2 pi), so the upper tail is explicit.
    const Potential p = builtin(LinearTailFamily{0.0});
    const double s2pi = std::sqrt(2.0 * std::numbers::pi);
    const double mass = normal_cdf(1.0) + std::exp(-0.5) / s2pi;
    auto oracle = [&](double level) { return 0.5 - std::log(level * mass * s2pi); };
    CHECK(monotone_rearrangement_1d(normalize(p), 0.999) == doctest::Approx(oracle(0.001)).epsilon(1e-8));
    const Distribution1d d(normalize(p));
    for (double level : {0.1, 0.001, 1e-20})
      CHECK(d.upper_quantile(level) == doctest::Approx(oracle(level)).epsilon(1e-8));
  }

  TEST_CASE("distribution tails stay accurate") {
    const Distribution1d d(normalize(builtin(GaussianFamily{0.0, 1})));
    for (double x : {-30.0, -8.0, -1.0, 0.0, 2.0, 8.0, 30.0}) {
      CHECK(d.cdf(x) == doctest::Approx(normal_cdf(x)).epsilon(1e-10));
      CHECK(d.sf(x) == doctest::Approx(normal_sf(x)).epsilon(1e-10));
    }
    // log of the Mills series phi(x) / x (1 - 1/x^2 + 3/x^4 - 15/x^6).
    const double x = 45.0, x2 = x * x;
    const double mills = -0.5 * x2 - std::log(x * std::sqrt(2.0 * std::numbers::pi)) +
                         std::log1p(-1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2));
    CHECK(d.log_sf(x) == doctest::Approx(mills).epsilon(1e-10));
  }

  TEST_CASE("ks distance") {
    const Potential gamma = normalize(builtin(GaussianFamily{0.0, 1}));
    const Distribution1d d(gamma);
    CHECK(ks_distance(std::vector<double>(50, 0.0), d) == doctest::Approx(0.5).epsilon(1e-12));

    const CounterNormal z(99);
    std::vector<double> xs(100000);
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = z(i);
    CHECK(ks_distance(xs, d) < 0.007);

    const Potential bump = normalize(builtin(BumpFamily{vec(0.0), 0.5, 0.5}));
    const MonotoneMap map(bump);
    int passes = 0;
    for (int rep = 0; rep < 100; ++rep) {
      const CounterNormal s(1000 + rep);
      std::vector<double> ys(1000);
      for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = map(s(i));
      if (ks_distance(ys, map.distribution()) < 1.63 / std::sqrt(1000.0)) ++passes;
    }
    CHECK(passes >= 95);
  }

  TEST_CASE("sliced ks in two dimensions") {
    const Potential p = normalize(builtin(GaussianFamily{1.0, 2}));
    const CounterNormal z(3);
    Matrix good(2, 5000), bad(2, 5000);
    for (int i = 0; i < 5000; ++i) {
      good(0, i) = z(2 * i) / std::sqrt(2.0);
      good(1, i) = z(2 * i + 1) / std::sqrt(2.0);
      bad.col(i) = good.col(i) * 2.0;
    }
    CHECK(ks_distance(good, p) < 0.03);
    CHECK(ks_distance(bad, p) > 0.1);
  }

  TEST_CASE("empirical lipschitz") {
    Matrix in(1, 500);
    const CounterNormal z(4);
    for (int i = 0; i < 500; ++i) in(0, i) = -5.0 + 0.02 * ((i * 37) % 500);
    CHECK(empirical_lipschitz(in, in).value == doctest::Approx(1.0).epsilon(1e-15));
    const EmpiricalLipschitz half = empirical_lipschitz(in, in / std::sqrt(2.0));
    CHECK(std::abs(half.value - 1.0 / std::sqrt(2.0)) < 1e-12);

    Matrix dup(1, 3), out(1, 3);
    dup << 0.0, 0.0, 1.0;
    out << 0.0, 5.0, 2.0;
    const EmpiricalLipschitz d = empirical_lipschitz(dup, out);
    CHECK(d.duplicates == 1);

    Matrix in2(2, 300), out2(2, 300);
    for (int i = 0; i < 300; ++i) {
      in2(0, i) = z(1000 + i);
      in2(1, i) = z(2000 + i);
    }
    Matrix rot(2, 2);
    rot << 0.0, -3.0, 3.0, 0.0;
    out2 = rot * in2;
    const EmpiricalLipschitz r = empirical_lipschitz(in2, out2);
    CHECK(r.exact);
    CHECK(r.value == doctest::Approx(3.0).epsilon(1e-12));
  }

  TEST_CASE("sharpness closed form") {
    CHECK(sharpness_h_unit_tail(0.0, 1.0) == doctest::Approx(1.115195).epsilon(1e-6));
    auto g = [](double T) { return [T](double y) { return std::min(std::exp(0.5 * T * T), std::exp(0.5 * y * y)); }; };
    for (double T : {1.0, 2.0, 4.0}) {
      for (double x : {-3.0, -1.0, 0.0, 0.7, 2.0}) {
        const auto gt = g(T);
        auto shifted = [&](double z) { return gt(x + z); };
        const double oracle = testing::gaussian_integral(shifted, -INFINITY, -T - x) +
                              testing::gaussian_integral(shifted, -T - x, T - x) +
                              testing::gaussian_integral(shifted, T - x, INFINITY);
        CHECK(sharpness_h(x, T) == doctest::Approx(oracle).epsilon(1e-10));
        CHECK(sharpness_h(x, T) == sharpness_h(-x, T));
      }
      CHECK(std::abs(sharpness_h(1e-4, T) - sharpness_h(-1e-4, T)) / 2e-4 < 1e-8);
      const double h2_fd = (sharpness_h(1e-3, T) - 2.0 * sharpness_h(0.0, T) + sharpness_h(-1e-3, T)) / 1e-6;
      CHECK(sharpness_h2(T) == doctest::Approx(h2_fd).epsilon(1e-5));
    }
  }

  TEST_CASE("sharpness check grows without bound") {
    const double t = 0.5 * std::log(2.0);
    const SharpnessResult a = sharpness_check(20.0, t);
    const SharpnessResult b = sharpness_check(40.0, t);
    CHECK(a.ratio >= 0.95);
    CHECK(b.measured > 4.0 * a.measured - 1e-9 * a.measured);
    CHECK(a.bound == doctest::Approx(400.0 / 3.0));
  }

  TEST_CASE("vt chain") {
    CHECK(vt_counterexample_check(4.0, 1.0).threshold == doctest::Approx(18.33).epsilon(1e-3));
    for (double T : {3.0, 4.0, 5.0, 6.0}) {
      const VtResult r = vt_counterexample_check(T, 1.0);
      CHECK(r.c_T <= std::log(2.0));
      CHECK(r.mass_tail <= 0.5);
      CHECK(r.mass_tail >= normal_sf(17.0 * T / 16.0));
      CHECK(r.density_at_T == doctest::Approx(r.density_formula).epsilon(1e-8));
      CHECK(r.l_refuted == (1.0 < r.lipschitz_lower));
    }
    // mu_T([T, inf)) < 1/2 for every T > 0, so small T still passes.
    CHECK(vt_counterexample_check(0.05, 1.0).mass_tail < 0.5);
    CHECK_THROWS_AS(vt_counterexample_check(0.0, 1.0), Error);
  }

  TEST_CASE("isoperimetric consistency of a certified map") {
    const Potential bump = normalize(builtin(BumpFamily{vec(0.0), 0.5, 0.5}));
    const double L = km_lipschitz(combined_profile(2.0, 0.5));
    const Distribution1d d(bump);
    for (double q = 0.5; q < 0.9999; q += 0.025) {
      const double a = d.quantile(q);
      const double g = d.pdf(a) / d.mass();
      CHECK(g >= d.sf(a) / (std::sqrt(2.0 * std::numbers::pi) * L) * (1.0 - 1e-3));
    }
  }

  TEST_CASE("tail fits") {
    const TailFit lin = tail_test(normalize(builtin(LinearTailFamily{0.0})), 2.0, 6.0);
    CHECK(lin.linear_slope == doctest::Approx(-1.0).epsilon(0.1));
    CHECK(lin.incompatible_with_gaussian_pushforward);

    const TailFit g = tail_test(normalize(builtin(GaussianFamily{0.0, 1})), 2.0, 6.0);
    CHECK(g.quad_a == doctest::Approx(-0.5).epsilon(0.1));
    CHECK(std::abs(g.quad_a + 0.5) < 0.05);
    CHECK_FALSE(g.incompatible_with_gaussian_pushforward);

    // N(0, 4) is gaussian(rho = -3/4) against gamma.
    const TailFit wide = tail_test(normalize(builtin(GaussianFamily{-0.75, 1})), 8.0, 16.0);
    CHECK(wide.quad_a == doctest::Approx(-0.125).epsilon(0.05));
  }

  TEST_CASE("report serialization") {
    DiagnosticsReport r;
    r.ks_distance = 0.004;
    r.bound_comparisons.push_back(compare("ok", 1.0, 2.0));
    CHECK(r.all_pass());
    r.bound_comparisons.push_back(compare("bad", 3.0, 2.0, 0.5));
    CHECK_FALSE(r.all_pass());
    const nlohmann::json j = r.to_json();
    CHECK(j.at("ks_distance").get<double>() == 0.004);
    CHECK(j.at("bound_comparisons").size() == 2);
    CHECK(j.at("all_pass").get<bool>() == false);
    const nlohmann::json v = to_json(vt_counterexample_check(4.0, 2.0));
    CHECK(v.at("threshold").get<double>() == doctest::Approx(18.33).epsilon(1e-3));
  }
}
