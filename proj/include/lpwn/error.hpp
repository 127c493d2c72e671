#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lpwn {

enum class ErrorCode {
  kIo,
  kFormat,
  kUnsupportedFormat,
  kDomain,
  kDegenerateFrame,
  kInstability,
  kCoverage,
  kDivergence,
  kShape,
  kConfig,
  kAlignment,
  kNumeric,
  kConfigMismatch,
  kUsage,
};

std::string_view error_code_name(ErrorCode code);

// All library failures surface as this type. The code is stable and is what
// the command line prints in its one-line error record.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lpwn
