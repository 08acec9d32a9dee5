#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cnnide {

enum class Errc {
  // preconditions
  InvalidArgument,
  DimensionMismatch,
  ShapeMismatch,
  BorderTooLarge,
  NotPerfectSquare,
  OddSide,
  StaleCache,
  EmptyBatch,
  EmptyMask,
  InvertedInterval,
  MismatchedCoverage,
  InsufficientFrames,
  TooManyPixels,
  UnstableConfig,
  // numerics
  DegenerateFrame,
  NonpositiveDiffusion,
  CholeskyFailure,
  NonFiniteLoss,
  DegenerateResiduals,
  SingularInnovationCov,
  SingularInnovation,
  OptimizerFailure,
  // files and configuration
  BadMagic,
  TruncatedPayload,
  ShapeMismatchOnLoad,
  ConfigError,
  FileError,
};

std::string_view errc_name(Errc code) noexcept;

enum class ErrorCategory { Precondition, Numeric, Io, Config };

ErrorCategory errc_category(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return errc_category(code_); }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace cnnide
