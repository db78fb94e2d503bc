#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace seguq {

enum class ErrorCode {
  DimensionMismatch,
  EmptyMask,
  EmptyGroundTruth,
  EmptyVentricles,
  DomainError,
  Degenerate,
  DegenerateAxis,
  DegenerateLabels,
  DegenerateMetric,
  RaggedSamples,
  MissingFeature,
  SpecError,
  ConfigError,
  IOError,
};

std::string_view to_string(ErrorCode code);

// All recoverable failures in the toolkit surface as this exception. The code
// is what report writers serialize as the reason for a missing value.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace seguq
