#include "morai/error.hpp"

namespace morai {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kOutOfBounds: return "OutOfBounds";
    case ErrorCode::kCellOccupied: return "CellOccupied";
    case ErrorCode::kCellMismatch: return "CellMismatch";
    case ErrorCode::kLevelTooNarrow: return "LevelTooNarrow";
    case ErrorCode::kBadDimensions: return "BadDimensions";
    case ErrorCode::kUnknownGlyph: return "UnknownGlyph";
    case ErrorCode::kBadManifest: return "BadManifest";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kUnknownAddition: return "UnknownAddition";
    case ErrorCode::kBadConfig: return "BadConfig";
    case ErrorCode::kBadCheckpoint: return "BadCheckpoint";
    case ErrorCode::kSessionClosed: return "SessionClosed";
    case ErrorCode::kUnknownSession: return "UnknownSession";
    case ErrorCode::kNothingToRemove: return "NothingToRemove";
    case ErrorCode::kMalformedLog: return "MalformedLog";
    case ErrorCode::kEmptySample: return "EmptySample";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kZeroVariance: return "ZeroVariance";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

}  // namespace morai
