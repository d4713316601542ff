#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace litfield {

enum class ErrorCode {
  kInvalidArgument,
  kInvalidDepth,
  kOutOfBounds,
  kNotNormalized,
  kDimensionMismatch,
  kDegenerateGeometry,
  kNoOverlap,
  kConfiguration,
  kNearRequiresDepth,
  kTruncated,
  kUnknownKind,
  kMalformed,
  kUnknownSession,
  kTimeout,
  kConnection,
  kProtocol,
  kRemote,
  kScene,
  kIo,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kInvalidDepth: return "invalid depth";
    case ErrorCode::kOutOfBounds: return "out of bounds";
    case ErrorCode::kNotNormalized: return "not normalized";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kDegenerateGeometry: return "degenerate geometry";
    case ErrorCode::kNoOverlap: return "no overlap";
    case ErrorCode::kConfiguration: return "configuration";
    case ErrorCode::kNearRequiresDepth: return "near ingest requires depth";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kUnknownKind: return "unknown kind";
    case ErrorCode::kMalformed: return "malformed";
    case ErrorCode::kUnknownSession: return "unknown session";
    case ErrorCode::kTimeout: return "timeout";
    case ErrorCode::kConnection: return "connection";
    case ErrorCode::kProtocol: return "protocol";
    case ErrorCode::kRemote: return "remote";
    case ErrorCode::kScene: return "scene";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by the packet decoder when the buffer ends before a field does.
class TruncatedError : public Error {
 public:
  TruncatedError(std::size_t offset, std::size_t needed)
      : Error(ErrorCode::kTruncated, "need " + std::to_string(needed) + " byte(s) at offset " +
                                         std::to_string(offset)),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace litfield
