#include "sepdiff/error.hpp"

namespace sepdiff {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotAProbability: return "NotAProbability";
    case ErrorKind::OriginMass: return "OriginMass";
    case ErrorKind::Reducible: return "Reducible";
    case ErrorKind::DuplicateDisplacement: return "DuplicateDisplacement";
    case ErrorKind::GeometryTooSmall: return "GeometryTooSmall";
    case ErrorKind::WrongCount: return "WrongCount";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::SiteIsOrigin: return "SiteIsOrigin";
    case ErrorKind::TargetOccupied: return "TargetOccupied";
    case ErrorKind::TargetIsOrigin: return "TargetIsOrigin";
    case ErrorKind::SizeCapExceeded: return "SizeCapExceeded";
    case ErrorKind::NotStationary: return "NotStationary";
    case ErrorKind::NotConnected: return "NotConnected";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::NotMeanZero: return "NotMeanZero";
    case ErrorKind::PropertyViolated: return "PropertyViolated";
    case ErrorKind::NonPositiveD: return "NonPositiveD";
    case ErrorKind::SupportTooLarge: return "SupportTooLarge";
    case ErrorKind::BlockTooLarge: return "BlockTooLarge";
    case ErrorKind::Frozen: return "Frozen";
    case ErrorKind::Inconclusive: return "Inconclusive";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

ErrorClass error_class(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SizeCapExceeded:
      return ErrorClass::SizeCap;
    case ErrorKind::NotStationary:
    case ErrorKind::NotConnected:
    case ErrorKind::NotConverged:
    case ErrorKind::PropertyViolated:
    case ErrorKind::NonPositiveD:
    case ErrorKind::Inconclusive:
    case ErrorKind::Frozen:
      return ErrorClass::Numerical;
    default:
      return ErrorClass::Validation;
  }
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace sepdiff
