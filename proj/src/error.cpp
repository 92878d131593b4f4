#include "glioma/error.hpp"

namespace glioma {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::Autograd: return "AutogradError";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::Decode: return "DecodeError";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::Stratification: return "StratificationError";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NonDeterministic: return "NonDeterministic";
    case ErrorCode::Training: return "TrainingError";
  }
  return "Unknown";
}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace glioma
