#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace lipmap {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<Eigen::VectorXd>;
using MatrixRef = Eigen::Ref<Eigen::MatrixXd>;
using ConstVectorRef = Eigen::Ref<const Eigen::VectorXd>;
using ConstMatrixRef = Eigen::Ref<const Eigen::MatrixXd>;

enum class ErrorCode {
  BadParams,
  NonIntegrable,
  DimTooHigh,
  GridTooCoarse,
  LambdaTooLarge,
  Underflow,
  TZeroHermite,
  StepFailure,
  DriftUnderflow,
  Domain,
  TNonpositive,
  LambdaBelowOne,
  NotIntegrable,
  QuadratureFail,
  EmptySamples,
  TTooSmall,
  Config,
};

const char* to_string(ErrorCode code);

/// True for codes that describe a failed computation rather than bad input.
bool is_numeric_failure(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Axis-aligned tensor grid. `points[i]` nodes span [lower[i], upper[i]].
struct GridSpec {
  Vector lower;
  Vector upper;
  std::vector<int> points;

  static GridSpec uniform(int dim, double lo, double hi, int n);

  int dim() const { return static_cast<int>(lower.size()); }
  long size() const;
  /// Grid point with flat index `k` (first axis varies fastest).
  Vector point(long k) const;
};

}  // namespace lipmap
