#include "lpm/error.hpp"

namespace lpm {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::OrderingViolation: return "OrderingViolation";
    case ErrorCode::SpectralGapViolation: return "SpectralGapViolation";
    case ErrorCode::NonzeroAtOrigin: return "NonzeroAtOrigin";
    case ErrorCode::StableBackwardTime: return "StableBackwardTime";
    case ErrorCode::DegenerateGap: return "DegenerateGap";
    case ErrorCode::NonpositiveLambda: return "NonpositiveLambda";
    case ErrorCode::LambdaInSpectrum: return "LambdaInSpectrum";
    case ErrorCode::LadderNotConverged: return "LadderNotConverged";
    case ErrorCode::KappaBelowVartheta: return "KappaBelowVartheta";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::NonfiniteState: return "NonfiniteState";
    case ErrorCode::AdaptednessViolation: return "AdaptednessViolation";
    case ErrorCode::IllConditionedDesign: return "IllConditionedDesign";
    case ErrorCode::Underdetermined: return "Underdetermined";
    case ErrorCode::GapViolation: return "GapViolation";
    case ErrorCode::TruncationTooShort: return "TruncationTooShort";
    case ErrorCode::MaxIterExceeded: return "MaxIterExceeded";
    case ErrorCode::ConsistencyFailure: return "ConsistencyFailure";
    case ErrorCode::NoSeparation: return "NoSeparation";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ResourceLimit: return "ResourceLimit";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace lpm
