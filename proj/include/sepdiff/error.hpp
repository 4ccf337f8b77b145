#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sepdiff {

enum class ErrorKind {
  // kernel
  NotAProbability,
  OriginMass,
  Reducible,
  DuplicateDisplacement,
  // geometry / state space
  GeometryTooSmall,
  WrongCount,
  OutOfRange,
  SiteIsOrigin,
  TargetOccupied,
  TargetIsOrigin,
  SizeCapExceeded,
  // generator
  NotStationary,
  NotConnected,
  // solvers
  NotConverged,
  NotMeanZero,
  PropertyViolated,
  // diffusion
  NonPositiveD,
  SupportTooLarge,
  BlockTooLarge,
  // montecarlo
  Frozen,
  Inconclusive,
  // cli / generic
  InvalidArgument,
  ConfigError,
};

std::string_view to_string(ErrorKind kind);

/// Coarse grouping used for process exit codes.
enum class ErrorClass { Validation, Numerical, SizeCap };

ErrorClass error_class(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace sepdiff
