#include "cdistill/error.hpp"

namespace cdistill {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyTensor: return "EmptyTensor";
    case ErrorCode::AllMasked: return "AllMasked";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::TokenOutOfRange: return "TokenOutOfRange";
    case ErrorCode::SequenceTooLong: return "SequenceTooLong";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TeacherTooShallow: return "TeacherTooShallow";
    case ErrorCode::LayerIndexOutOfRange: return "LayerIndexOutOfRange";
    case ErrorCode::HeadCountMismatch: return "HeadCountMismatch";
    case ErrorCode::DepthMismatch: return "DepthMismatch";
    case ErrorCode::DataExhausted: return "DataExhausted";
    case ErrorCode::EmptyTable: return "EmptyTable";
    case ErrorCode::NonPositiveSize: return "NonPositiveSize";
    case ErrorCode::DegenerateRatio: return "DegenerateRatio";
    case ErrorCode::InvalidTarget: return "InvalidTarget";
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::StepOutOfRange: return "StepOutOfRange";
    case ErrorCode::EmptyEvalSet: return "EmptyEvalSet";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::DigestMismatch: return "DigestMismatch";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::InconsistentColumns: return "InconsistentColumns";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonScalarLoss:
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::NonFinite:
    case ErrorCode::DataExhausted:
    case ErrorCode::IoFailure:
    case ErrorCode::DigestMismatch:
    case ErrorCode::VersionMismatch:
      return false;
    default:
      return true;
  }
}

}  // namespace cdistill
