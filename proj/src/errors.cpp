#include "declab/errors.hpp"

namespace declab {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::LabelCollision: return "LabelCollision";
    case ErrorCode::LabelNotFound: return "LabelNotFound";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::BadBipartition: return "BadBipartition";
    case ErrorCode::InvalidSetup: return "InvalidSetup";
    case ErrorCode::InvalidBasis: return "InvalidBasis";
    case ErrorCode::NotHomogeneous: return "NotHomogeneous";
    case ErrorCode::SizeGuard: return "SizeGuard";
    case ErrorCode::InvalidProjector: return "InvalidProjector";
    case ErrorCode::IncompleteFamily: return "IncompleteFamily";
    case ErrorCode::DegenerateSpec: return "DegenerateSpec";
    case ErrorCode::ArityError: return "ArityError";
    case ErrorCode::NotEqualAmplitude: return "NotEqualAmplitude";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::BadGrouping: return "BadGrouping";
    case ErrorCode::NumericalUnderflow: return "NumericalUnderflow";
    case ErrorCode::StepRejected: return "StepRejected";
    case ErrorCode::NodeProximity: return "NodeProximity";
    case ErrorCode::Escaped: return "Escaped";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace declab
