#pragma once

#include <stdexcept>
#include <string>

namespace avp {

enum class ErrorCode {
  UnsupportedFormat,
  CorruptMedia,
  UnknownAsset,
  TooShort,
  AlreadyIndexed,
  NotIndexed,
  UnknownSegment,
  InvalidArgument,
  SchemaViolation,
  EmptyQuery,
  InvalidSpan,
  UnknownEvent,
  UnknownDashboard,
  SyncPointOutOfRange,
  NoAcousticMatch,
  DuplicateMember,
  ConfigError,
  IoError,
};

const char* to_string(ErrorCode code) noexcept;

// All library failures surface as avp::Error; the code is what callers branch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace avp
