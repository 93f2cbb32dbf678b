#pragma once

#include "lipmap/types.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

namespace testing {

inline lipmap::Vector vec(double x) {
  lipmap::Vector v(1);
  v[0] = x;
  return v;
}

inline lipmap::Vector vec(double x, double y) {
  lipmap::Vector v(2);
  v << x, y;
  return v;
}

inline double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// int_a^b g(x) dx with infinite ends allowed.
inline double lebesgue_integral(const std::function<double(double)>& g, double a, double b) {
  const double inf = std::numeric_limits<double>::infinity();
  if (std::isinf(a) && std::isinf(b)) {
    boost::math::quadrature::exp_sinh<double> es;
    return es.integrate([&](double u) { return g(u) + g(-u); }, 0.0, inf);
  }
  if (std::isinf(b)) {
    boost::math::quadrature::exp_sinh<double> es;
    return es.integrate([&](double u) { return g(a + u); }, 0.0, inf);
  }
  if (std::isinf(a)) {
    boost::math::quadrature::exp_sinh<double> es;
    return es.integrate([&](double u) { return g(b - u); }, 0.0, inf);
  }
  boost::math::quadrature::tanh_sinh<double> ts;
  return ts.integrate(g, a, b);
}

// int_a^b f(x) phi(x) dx.
inline double gaussian_integral(const std::function<double(double)>& f, double a, double b) {
  return lebesgue_integral([&](double x) { return f(x) * phi(x); }, a, b);
}

// int_a^b exp(log_f(x)) phi(x) dx, with the product formed in log space.
inline double gaussian_integral_log(const std::function<double(double)>& log_f, double a, double b) {
  return lebesgue_integral([&](double x) { return std::exp(log_f(x) - 0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }, a, b);
}

}  // namespace testing
