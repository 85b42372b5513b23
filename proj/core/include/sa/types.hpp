#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sa {

using ParamVec = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct SaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatchError : SaError {
  using SaError::SaError;
};
struct DivergenceError : SaError {
  using SaError::SaError;
};
struct InvalidScheduleError : SaError {
  using SaError::SaError;
};
struct BiasTooLargeError : SaError {
  using SaError::SaError;
};
struct InfiniteCvWithBiasError : SaError {
  using SaError::SaError;
};
struct NonPositiveWeightError : SaError {
  using SaError::SaError;
};
struct MissingIteratesError : SaError {
  using SaError::SaError;
};
struct BiasedOracleError : SaError {
  using SaError::SaError;
};
struct EmptyProblemError : SaError {
  using SaError::SaError;
};
struct RegimeUnavailableError : SaError {
  using SaError::SaError;
};
struct HypothesisViolatedError : SaError {
  using SaError::SaError;
};
struct NonconstantStepError : SaError {
  using SaError::SaError;
};
struct DegeneratePosteriorError : SaError {
  using SaError::SaError;
};
struct BatchTooLargeError : SaError {
  using SaError::SaError;
};
struct ZeroWeightSumError : SaError {
  using SaError::SaError;
};
struct EpsilonOutOfRangeError : SaError {
  using SaError::SaError;
};
struct ReducibleError : SaError {
  using SaError::SaError;
};
struct RankDeficientError : SaError {
  using SaError::SaError;
};
struct ConfigViolationError : SaError {
  using SaError::SaError;
};
struct ParseError : SaError {
  ParseError(int line_number, const std::string& message)
      : SaError("line " + std::to_string(line_number) + ": " + message), line(line_number) {}
  int line;
};

inline bool all_finite(const ParamVec& v) { return v.allFinite(); }

// a*b with the convention 0*inf = 0.
inline double mul0(double a, double b) {
  if (a == 0.0 || b == 0.0) return 0.0;
  return a * b;
}

}  // namespace sa
