#pragma once

#include <stdexcept>
#include <string>

namespace camdiffuse {

// Stable error identities used throughout the library. The CLI maps these to
// process exit codes: input/usage problems exit 2, internal failures exit 1.
enum class Errc {
  MalformedHeader,
  UnsupportedDtype,
  UnsupportedOrder,
  TruncatedData,
  IoFailure,
  InvalidShape,
  BadManifest,
  ClassOutOfRange,
  ChannelMismatch,
  ShapeMismatch,
  InvalidTarget,
  NonFiniteInput,
  KOutOfRange,
  GridMismatch,
  DimensionMismatch,
  DuplicateClass,
  EmptyEvaluation,
  OracleSizeExceeded,
  InvalidArgument,
  Internal,
};

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::UnsupportedDtype: return "UnsupportedDtype";
    case Errc::UnsupportedOrder: return "UnsupportedOrder";
    case Errc::TruncatedData: return "TruncatedData";
    case Errc::IoFailure: return "IoFailure";
    case Errc::InvalidShape: return "InvalidShape";
    case Errc::BadManifest: return "BadManifest";
    case Errc::ClassOutOfRange: return "ClassOutOfRange";
    case Errc::ChannelMismatch: return "ChannelMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::InvalidTarget: return "InvalidTarget";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::KOutOfRange: return "KOutOfRange";
    case Errc::GridMismatch: return "GridMismatch";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::DuplicateClass: return "DuplicateClass";
    case Errc::EmptyEvaluation: return "EmptyEvaluation";
    case Errc::OracleSizeExceeded: return "OracleSizeExceeded";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Internal: return "Internal";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace camdiffuse
