#include "cnnide/error.hpp"

namespace cnnide {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::BorderTooLarge: return "BorderTooLarge";
    case Errc::NotPerfectSquare: return "NotPerfectSquare";
    case Errc::OddSide: return "OddSide";
    case Errc::StaleCache: return "StaleCache";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::EmptyMask: return "EmptyMask";
    case Errc::InvertedInterval: return "InvertedInterval";
    case Errc::MismatchedCoverage: return "MismatchedCoverage";
    case Errc::InsufficientFrames: return "InsufficientFrames";
    case Errc::TooManyPixels: return "TooManyPixels";
    case Errc::UnstableConfig: return "UnstableConfig";
    case Errc::DegenerateFrame: return "DegenerateFrame";
    case Errc::NonpositiveDiffusion: return "NonpositiveDiffusion";
    case Errc::CholeskyFailure: return "CholeskyFailure";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::DegenerateResiduals: return "DegenerateResiduals";
    case Errc::SingularInnovationCov: return "SingularInnovationCov";
    case Errc::SingularInnovation: return "SingularInnovation";
    case Errc::OptimizerFailure: return "OptimizerFailure";
    case Errc::BadMagic: return "BadMagic";
    case Errc::TruncatedPayload: return "TruncatedPayload";
    case Errc::ShapeMismatchOnLoad: return "ShapeMismatchOnLoad";
    case Errc::ConfigError: return "ConfigError";
    case Errc::FileError: return "FileError";
  }
  return "Unknown";
}

ErrorCategory errc_category(Errc code) noexcept {
  switch (code) {
    case Errc::DegenerateFrame:
    case Errc::NonpositiveDiffusion:
    case Errc::CholeskyFailure:
    case Errc::NonFiniteLoss:
    case Errc::DegenerateResiduals:
    case Errc::SingularInnovationCov:
    case Errc::SingularInnovation:
    case Errc::OptimizerFailure:
      return ErrorCategory::Numeric;
    case Errc::BadMagic:
    case Errc::TruncatedPayload:
    case Errc::ShapeMismatchOnLoad:
    case Errc::FileError:
      return ErrorCategory::Io;
    case Errc::ConfigError:
      return ErrorCategory::Config;
    default:
      return ErrorCategory::Precondition;
  }
}

}  // namespace cnnide
