#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace declab {

enum class ErrorCode {
  InvalidArgument,
  LabelCollision,
  LabelNotFound,
  LayoutMismatch,
  BadBipartition,
  InvalidSetup,
  InvalidBasis,
  NotHomogeneous,
  SizeGuard,
  InvalidProjector,
  IncompleteFamily,
  DegenerateSpec,
  ArityError,
  NotEqualAmplitude,
  GridMismatch,
  NotFound,
  BadGrouping,
  NumericalUnderflow,
  StepRejected,
  NodeProximity,
  Escaped,
  ParseError,
  ConfigError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch on kind, not text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace declab
