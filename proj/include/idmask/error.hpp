#pragma once

#include <stdexcept>
#include <string>

namespace idmask {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched image/feature/batch shapes or sizes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value violates a documented precondition (range, finiteness, counts).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

enum class IoErrorKind {
  kMissingFile,
  kUnwritable,
  kMalformedHeader,
  kUnsupportedFormat,
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kEmptyPayload,
};

class IoError : public Error {
 public:
  IoError(IoErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  IoErrorKind kind() const noexcept { return kind_; }

 private:
  IoErrorKind kind_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace idmask
