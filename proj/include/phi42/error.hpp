#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace phi42 {

enum class ErrorCode {
  InvalidDimensions,
  GridMismatch,
  UnsupportedDegree,
  NonfiniteField,
  InsufficientHorizon,
  DegenerateTest,
  InvalidArgument,
  UnknownSubcommand,
  MissingConfig,
  InvalidOverride,
  UnwritableOutput,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidDimensions: return "invalid-dimensions";
    case ErrorCode::GridMismatch: return "grid-mismatch";
    case ErrorCode::UnsupportedDegree: return "unsupported-degree";
    case ErrorCode::NonfiniteField: return "nonfinite-field";
    case ErrorCode::InsufficientHorizon: return "insufficient-horizon";
    case ErrorCode::DegenerateTest: return "degenerate-test";
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::UnknownSubcommand: return "unknown-subcommand";
    case ErrorCode::MissingConfig: return "missing-config";
    case ErrorCode::InvalidOverride: return "invalid-override";
    case ErrorCode::UnwritableOutput: return "unwritable-output";
  }
  return "unknown";
}

/// Exception carrying one of the library's error kinds.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace phi42
