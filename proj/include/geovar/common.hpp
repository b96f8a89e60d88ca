#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace geovar {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ErrorCode {
  OutOfDomain,
  DegenerateAtPoint,
  ProjectorNotIdempotent,
  ZeroVector,
  DomainExit,
  StepFailure,
  NotPeriodic,
  ConstraintViolated,
  NotCritical,
  DegenerateGec,
  RefinementDiverged,
  NewtonDiverged,
  DegenerateRestriction,
  NoValidInterval,
  NotPJacobiField,
  StronglyDegenerateSuspected,
  TubeTooWide,
  SignatureBroken,
  NonPositiveFactor,
  InvalidArgument,
  ParseError,
  ConfigError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Max absolute entry; 0 for empty objects.
inline double max_abs(const Mat& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }
inline double max_abs(const Vec& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

inline Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

}  // namespace geovar
