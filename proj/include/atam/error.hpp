#pragma once

#include <stdexcept>
#include <string>

namespace atam {

enum class ErrorCode {
  kInvalidArgument,
  kFailedPrecondition,
  kNotFound,
  kConflict,
  kConfig,
  kNumerical,
  kIo,
};

// Single exception type for the library. The code drives CLI exit status
// and HTTP status mapping in the service.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace atam
