#pragma once

#include <stdexcept>
#include <string>

namespace lpm {

enum class ErrorCode {
  OrderingViolation,
  SpectralGapViolation,
  NonzeroAtOrigin,
  StableBackwardTime,
  DegenerateGap,
  NonpositiveLambda,
  LambdaInSpectrum,
  LadderNotConverged,
  KappaBelowVartheta,
  GridMismatch,
  NonfiniteState,
  AdaptednessViolation,
  IllConditionedDesign,
  Underdetermined,
  GapViolation,
  TruncationTooShort,
  MaxIterExceeded,
  ConsistencyFailure,
  NoSeparation,
  ConfigError,
  ResourceLimit,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lpm
