#pragma once

#include <stdexcept>
#include <string>

namespace objloop {

enum class ErrorCode {
  kInvalidArgument,
  kAngleNearPi,
  kNotVisible,
  kEmptyPatch,
  kEmptyHistory,
  kDimMismatch,
  kParseError,
  kSchemaError,
  kIoError,
  kSingularNormalEquations,
  kPlacementFailure,
  kDegenerateGeometry,
  kNoOverlap,
};

const char* ErrorCodeName(ErrorCode code);

// Numerical failures map to CLI exit code 3, everything else to 2.
bool IsNumericalError(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace objloop
