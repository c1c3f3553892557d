#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ardd {

enum class ErrorCode {
  DimensionMismatch,
  RankDeficient,
  DegenerateDof,
  InvalidSpec,
  AllUnpenalized,
  InvalidGamma,
  TooFewObservations,
  DegeneratePilot,
  InsufficientSupport,
  DegenerateBias,
  InvalidDataset,
  PilotRankDeficient,
  NotPsd,
  ConfigInvalid,
  AllRepsFailed,
  ParseError,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::DegenerateDof: return "DegenerateDof";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::AllUnpenalized: return "AllUnpenalized";
    case ErrorCode::InvalidGamma: return "InvalidGamma";
    case ErrorCode::TooFewObservations: return "TooFewObservations";
    case ErrorCode::DegeneratePilot: return "DegeneratePilot";
    case ErrorCode::InsufficientSupport: return "InsufficientSupport";
    case ErrorCode::DegenerateBias: return "DegenerateBias";
    case ErrorCode::InvalidDataset: return "InvalidDataset";
    case ErrorCode::PilotRankDeficient: return "PilotRankDeficient";
    case ErrorCode::NotPsd: return "NotPsd";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::AllRepsFailed: return "AllRepsFailed";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI, the Monte Carlo engine) can branch on the kind of error
/// instead of parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace ardd
