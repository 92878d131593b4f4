#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace glioma {

enum class ErrorCode {
  InvalidArgument,
  ShapeMismatch,
  DegenerateVariance,
  NonFinite,
  OutOfRange,
  Autograd,
  BadMagic,
  UnsupportedVersion,
  Truncated,
  ChecksumMismatch,
  Decode,
  Io,
  Stratification,
  InsufficientSamples,
  EmptyInput,
  NonDeterministic,
  Training,
};

std::string_view error_code_name(ErrorCode code);

// Every failure raised by the library carries a stable machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace glioma
