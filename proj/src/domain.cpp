#include "geovar/domain.hpp"

#include <cmath>

namespace geovar {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::DegenerateAtPoint: return "DegenerateAtPoint";
    case ErrorCode::ProjectorNotIdempotent: return "ProjectorNotIdempotent";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DomainExit: return "DomainExit";
    case ErrorCode::StepFailure: return "StepFailure";
    case ErrorCode::NotPeriodic: return "NotPeriodic";
    case ErrorCode::ConstraintViolated: return "ConstraintViolated";
    case ErrorCode::NotCritical: return "NotCritical";
    case ErrorCode::DegenerateGec: return "DegenerateGec";
    case ErrorCode::RefinementDiverged: return "RefinementDiverged";
    case ErrorCode::NewtonDiverged: return "NewtonDiverged";
    case ErrorCode::DegenerateRestriction: return "DegenerateRestriction";
    case ErrorCode::NoValidInterval: return "NoValidInterval";
    case ErrorCode::NotPJacobiField: return "NotPJacobiField";
    case ErrorCode::StronglyDegenerateSuspected: return "StronglyDegenerateSuspected";
    case ErrorCode::TubeTooWide: return "TubeTooWide";
    case ErrorCode::SignatureBroken: return "SignatureBroken";
    case ErrorCode::NonPositiveFactor: return "NonPositiveFactor";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

ChartDomain::ChartDomain(std::vector<double> lo, std::vector<double> hi, std::string name,
                         std::vector<double> periods)
    : dim(static_cast<int>(lo.size())), lower(std::move(lo)), upper(std::move(hi)),
      period(std::move(periods)), label(std::move(name)) {
  if (period.empty()) period.assign(dim, 0.0);
  validate();
}

ChartDomain ChartDomain::unbounded(int m, std::string name) {
  const double inf = std::numeric_limits<double>::infinity();
  return ChartDomain(std::vector<double>(m, -inf), std::vector<double>(m, inf), std::move(name));
}

void ChartDomain::validate() const {
  if (dim < 1) throw Error(ErrorCode::InvalidArgument, "chart dimension must be positive");
  if ((int)upper.size() != dim || (int)period.size() != dim)
    throw Error(ErrorCode::InvalidArgument, "chart bounds have inconsistent sizes");
  for (int i = 0; i < dim; ++i) {
    if (!(lower[i] < upper[i]))
      throw Error(ErrorCode::InvalidArgument, "chart lower bound not below upper bound");
    if (period[i] < 0.0) throw Error(ErrorCode::InvalidArgument, "negative period");
  }
}

bool ChartDomain::contains(const Vec& x, double margin) const {
  if (x.size() != dim) return false;
  for (int i = 0; i < dim; ++i) {
    if (!std::isfinite(x[i])) return false;
    if (periodic(i)) continue;
    if (x[i] <= lower[i] + margin || x[i] >= upper[i] - margin) return false;
  }
  return true;
}

Vec ChartDomain::displacement(const Vec& from, const Vec& to) const {
  Vec d = to - from;
  for (int i = 0; i < dim; ++i) {
    if (!periodic(i)) continue;
    d[i] -= period[i] * std::round(d[i] / period[i]);
  }
  return d;
}

Vec ChartDomain::wrap(const Vec& x) const {
  Vec y = x;
  for (int i = 0; i < dim; ++i) {
    if (!periodic(i)) continue;
    y[i] = lower[i] + std::fmod(std::fmod(x[i] - lower[i], period[i]) + period[i], period[i]);
  }
  return y;
}

}  // namespace geovar
