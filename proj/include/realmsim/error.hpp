#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace realmsim {

enum class ErrorCode {
  kNotFound,
  kLifecycle,
  kOwnership,
  kAccessViolation,
  kBounds,
  kInterface,
  kDecode,
  kIntegrity,
  kState,
  kPolicyExhausted,
  kExchangeFull,
  kImageVerification,
  kMeasurement,
  kConfig,
  kProtocol,
  kIo,
};

std::string_view error_code_name(ErrorCode code);

// Every typed failure of the simulator surfaces as an Error. Anything else
// escaping a command is a simulator bug.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace realmsim
