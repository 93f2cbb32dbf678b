#pragma once

#include "lipmap/types.hpp"

namespace lipmap::linalg {

/// Eigenvalues of a small symmetric matrix in ascending order. Closed form
/// for n <= 2, Eigen's self-adjoint solver otherwise.
Vector symmetric_eigenvalues(const Matrix& a);

double max_eigenvalue(const Matrix& a);
double min_eigenvalue(const Matrix& a);

/// Largest singular value.
double operator_norm(const Matrix& a);

}  // namespace lipmap::linalg
