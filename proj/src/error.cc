#include "objloop/error.hpp"

namespace objloop {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kAngleNearPi: return "AngleNearPi";
    case ErrorCode::kNotVisible: return "NotVisible";
    case ErrorCode::kEmptyPatch: return "EmptyPatch";
    case ErrorCode::kEmptyHistory: return "EmptyHistory";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kSingularNormalEquations: return "SingularNormalEquations";
    case ErrorCode::kPlacementFailure: return "PlacementFailure";
    case ErrorCode::kDegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::kNoOverlap: return "NoOverlap";
  }
  return "Unknown";
}

bool IsNumericalError(ErrorCode code) {
  switch (code) {
    case ErrorCode::kAngleNearPi:
    case ErrorCode::kSingularNormalEquations:
    case ErrorCode::kDegenerateGeometry:
    case ErrorCode::kPlacementFailure:
      return true;
    default:
      return false;
  }
}

}  // namespace objloop
