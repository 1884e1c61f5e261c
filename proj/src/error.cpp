#include "dexkin/error.hpp"

namespace dexkin {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kOutOfTravel: return "OutOfTravel";
    case ErrorCode::kTravelExceeded: return "TravelExceeded";
    case ErrorCode::kSingularCoupling: return "SingularCoupling";
    case ErrorCode::kNonFiniteEvaluation: return "NonFiniteEvaluation";
    case ErrorCode::kMissingLandmark: return "MissingLandmark";
    case ErrorCode::kDegenerateAxis: return "DegenerateAxis";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kNonMonotoneTimestamp: return "NonMonotoneTimestamp";
    case ErrorCode::kVersionError: return "VersionError";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kEmptyLog: return "EmptyLog";
    case ErrorCode::kUnknownPair: return "UnknownPair";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace dexkin
