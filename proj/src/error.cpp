#include "avp/error.hpp"

namespace avp {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptMedia: return "CorruptMedia";
    case ErrorCode::UnknownAsset: return "UnknownAsset";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::AlreadyIndexed: return "AlreadyIndexed";
    case ErrorCode::NotIndexed: return "NotIndexed";
    case ErrorCode::UnknownSegment: return "UnknownSegment";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::EmptyQuery: return "EmptyQuery";
    case ErrorCode::InvalidSpan: return "InvalidSpan";
    case ErrorCode::UnknownEvent: return "UnknownEvent";
    case ErrorCode::UnknownDashboard: return "UnknownDashboard";
    case ErrorCode::SyncPointOutOfRange: return "SyncPointOutOfRange";
    case ErrorCode::NoAcousticMatch: return "NoAcousticMatch";
    case ErrorCode::DuplicateMember: return "DuplicateMember";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace avp
