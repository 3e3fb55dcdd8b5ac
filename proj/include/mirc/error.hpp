#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mirc {

enum class ErrorKind {
  Parse,
  Integrity,
  Io,
  DegenerateCrop,
  TooShortClip,
  NoValidPermutation,
  MissingEmbedding,
  EmptyAfterCleaning,
  NoOperatingPoint,
  Usage,
  Sequencing,
  Conflict,
  NotReady,
  NotFound,
  Setup,
  InsufficientData,
};

std::string_view error_kind_name(ErrorKind kind);

/// Single exception type for the toolkit; `kind` drives CLI exit codes and
/// HTTP status mapping.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace mirc
