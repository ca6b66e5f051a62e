#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace morai {

enum class ErrorCode {
  kOutOfBounds,
  kCellOccupied,
  kCellMismatch,
  kLevelTooNarrow,
  kBadDimensions,
  kUnknownGlyph,
  kBadManifest,
  kShapeMismatch,
  kInvalidArgument,
  kEmptyCorpus,
  kUnknownAddition,
  kBadConfig,
  kBadCheckpoint,
  kSessionClosed,
  kUnknownSession,
  kNothingToRemove,
  kMalformedLog,
  kEmptySample,
  kLengthMismatch,
  kTooFewPoints,
  kZeroVariance,
  kIo,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so the
// HTTP layer and the Python bindings can map it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace morai
