#include "lpwn/error.hpp"

namespace lpwn {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return "io";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kUnsupportedFormat: return "unsupported_format";
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kDegenerateFrame: return "degenerate_frame";
    case ErrorCode::kInstability: return "instability";
    case ErrorCode::kCoverage: return "coverage";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kAlignment: return "alignment";
    case ErrorCode::kNumeric: return "numeric";
    case ErrorCode::kConfigMismatch: return "config_mismatch";
    case ErrorCode::kUsage: return "usage";
  }
  return "unknown";
}

}  // namespace lpwn
