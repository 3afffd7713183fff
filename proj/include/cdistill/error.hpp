#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cdistill {

enum class ErrorCode {
  // tensor_numerics
  ShapeMismatch,
  EmptyTensor,
  AllMasked,
  LabelOutOfRange,
  NonScalarLoss,
  NonFiniteLoss,
  NonFinite,
  // encoder_model
  InvalidConfig,
  TokenOutOfRange,
  SequenceTooLong,
  DimensionMismatch,
  // distillation
  TeacherTooShallow,
  LayerIndexOutOfRange,
  HeadCountMismatch,
  DepthMismatch,
  DataExhausted,
  // corpus_data
  EmptyTable,
  NonPositiveSize,
  DegenerateRatio,
  InvalidTarget,
  InvalidDistribution,
  InvalidSpec,
  // training
  StepOutOfRange,
  EmptyEvalSet,
  // cli_persistence
  IoFailure,
  DigestMismatch,
  VersionMismatch,
  InconsistentColumns,
};

std::string_view to_string(ErrorCode code) noexcept;

// True for errors caused by bad input or configuration, as opposed to
// failures that surface while a computation runs.
bool is_validation_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cdistill
