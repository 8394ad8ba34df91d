#ifndef SURVMED_ERROR_HPP
#define SURVMED_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace survmed {

enum class ErrorCode {
  InvalidInput,
  ConfigError,
  SeparationDetected,
  RankDeficient,
  NoEventsForCause,
  MonotoneLikelihood,
  DegeneratePropensity,
  DegenerateMediatorProb,
  TooManyFailedReplicates,
  StateSpaceTooLarge,
  NonProportionalTruth,
  Unsupported,
  NotConverged,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::SeparationDetected: return "SeparationDetected";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NoEventsForCause: return "NoEventsForCause";
    case ErrorCode::MonotoneLikelihood: return "MonotoneLikelihood";
    case ErrorCode::DegeneratePropensity: return "DegeneratePropensity";
    case ErrorCode::DegenerateMediatorProb: return "DegenerateMediatorProb";
    case ErrorCode::TooManyFailedReplicates: return "TooManyFailedReplicates";
    case ErrorCode::StateSpaceTooLarge: return "StateSpaceTooLarge";
    case ErrorCode::NonProportionalTruth: return "NonProportionalTruth";
    case ErrorCode::Unsupported: return "Unsupported";
    case ErrorCode::NotConverged: return "NotConverged";
  }
  return "Unknown";
}

// Input/config problems are the caller's to fix; everything else is a
// numerical failure of some fitting stage.
inline bool is_input_error(ErrorCode code) {
  return code == ErrorCode::InvalidInput || code == ErrorCode::ConfigError;
}

/// Exception carrying the pipeline stage that failed and a stable code.
class Error : public std::runtime_error {
 public:
  Error(std::string stage, ErrorCode code, std::string detail)
      : std::runtime_error("stage=" + stage + " code=" + std::string(to_string(code)) +
                           " detail=" + detail),
        stage_(std::move(stage)),
        code_(code),
        detail_(std::move(detail)) {}

  const std::string& stage() const noexcept { return stage_; }
  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string stage_;
  ErrorCode code_;
  std::string detail_;
};

}  // namespace survmed

#endif  // SURVMED_ERROR_HPP
