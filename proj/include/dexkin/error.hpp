#pragma once

#include <stdexcept>
#include <string>

namespace dexkin {

enum class ErrorCode {
  kNoConvergence,
  kOutOfTravel,
  kTravelExceeded,
  kSingularCoupling,
  kNonFiniteEvaluation,
  kMissingLandmark,
  kDegenerateAxis,
  kParseError,
  kNonMonotoneTimestamp,
  kVersionError,
  kConfigError,
  kIoError,
  kEmptyLog,
  kUnknownPair,
  kInvalidArgument,
};

const char* to_string(ErrorCode code);

// Single exception type for the library. The code drives CLI exit statuses;
// the message carries the context (stage, digit, actuator, line number...).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& reason)
      : Error(ErrorCode::kParseError,
              "line " + std::to_string(line) + ": " + reason),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace dexkin
