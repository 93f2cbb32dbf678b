#include "lipmap/types.hpp"

namespace lipmap {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadParams: return "BAD_PARAMS";
    case ErrorCode::NonIntegrable: return "NON_INTEGRABLE";
    case ErrorCode::DimTooHigh: return "DIM_TOO_HIGH";
    case ErrorCode::GridTooCoarse: return "GRID_TOO_COARSE";
    case ErrorCode::LambdaTooLarge: return "LAMBDA_TOO_LARGE";
    case ErrorCode::Underflow: return "UNDERFLOW";
    case ErrorCode::TZeroHermite: return "T_ZERO_HERMITE";
    case ErrorCode::StepFailure: return "STEP_FAILURE";
    case ErrorCode::DriftUnderflow: return "DRIFT_UNDERFLOW";
    case ErrorCode::Domain: return "DOMAIN";
    case ErrorCode::TNonpositive: return "T_NONPOSITIVE";
    case ErrorCode::LambdaBelowOne: return "LAMBDA_BELOW_ONE";
    case ErrorCode::NotIntegrable: return "NOT_INTEGRABLE";
    case ErrorCode::QuadratureFail: return "QUADRATURE_FAIL";
    case ErrorCode::EmptySamples: return "EMPTY_SAMPLES";
    case ErrorCode::TTooSmall: return "T_TOO_SMALL";
    case ErrorCode::Config: return "CONFIG";
  }
  return "UNKNOWN";
}

bool is_numeric_failure(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadParams:
    case ErrorCode::Config:
    case ErrorCode::LambdaBelowOne:
    case ErrorCode::LambdaTooLarge:
    case ErrorCode::TNonpositive:
    case ErrorCode::Domain:
    case ErrorCode::DimTooHigh:
      return false;
    default:
      return true;
  }
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

GridSpec GridSpec::uniform(int dim, double lo, double hi, int n) {
  GridSpec g;
  g.lower = Vector::Constant(dim, lo);
  g.upper = Vector::Constant(dim, hi);
  g.points.assign(dim, n);
  return g;
}

long GridSpec::size() const {
  long n = 1;
  for (int p : points) n *= p;
  return n;
}

Vector GridSpec::point(long k) const {
  Vector x(dim());
  for (int i = 0; i < dim(); ++i) {
    const int n = points[i];
    const long j = k % n;
    k /= n;
    x[i] = n == 1 ? lower[i] : lower[i] + (upper[i] - lower[i]) * static_cast<double>(j) / (n - 1);
  }
  return x;
}

}  // namespace lipmap
