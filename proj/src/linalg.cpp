#include "lipmap/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace lipmap::linalg {

Vector symmetric_eigenvalues(const Matrix& a) {
  const auto n = a.rows();
  if (n == 1) return Vector::Constant(1, a(0, 0));
  if (n == 2) {
    const double m = 0.5 * (a(0, 0) + a(1, 1));
    const double d = 0.5 * (a(0, 0) - a(1, 1));
    const double off = 0.5 * (a(0, 1) + a(1, 0));
    const double r = std::hypot(d, off);
    Vector ev(2);
    ev << m - r, m + r;
    return ev;
  }
  const Matrix sym = 0.5 * (a + a.transpose());
  return Eigen::SelfAdjointEigenSolver<Matrix>(sym, Eigen::EigenvaluesOnly).eigenvalues();
}

double max_eigenvalue(const Matrix& a) {
  const Vector ev = symmetric_eigenvalues(a);
  return ev[ev.size() - 1];
}

double min_eigenvalue(const Matrix& a) { return symmetric_eigenvalues(a)[0]; }

double operator_norm(const Matrix& a) {
  if (a.size() == 1) return std::abs(a(0, 0));
  return std::sqrt(std::max(0.0, max_eigenvalue(a.transpose() * a)));
}

}  // namespace lipmap::linalg
