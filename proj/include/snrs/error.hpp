#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace snrs {

enum class ErrorKind {
  kInvalidArgument,
  kShapeMismatch,
  kInvalidConfig,
  kBadMagic,
  kUnsupportedVersion,
  kTruncated,
  kChecksumMismatch,
  kLayoutMismatch,      // payload size disagrees with config-declared shapes
  kInvariantViolation,  // e.g. nonzero weight in a masked slot
  kMissingFile,
  kIo,
  kDimensionMismatch,
  kBadLabel,
  kBadManifest,
  kEmptyDataset,
  kDivergence,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the kinds above so
/// callers (notably the CLI exit-code mapping) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace snrs
