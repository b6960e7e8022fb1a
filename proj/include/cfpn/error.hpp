#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cfpn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible (channel mismatch, rank mismatch, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A pooling rate or stride does not divide a spatial extent.
class DivisibilityError : public Error {
 public:
  using Error::Error;
};

/// Input image size violates the backbone contract (multiples of 32).
class InputSizeError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported Netpbm payload.
class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), message_(what), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }
  /// The description without the offset suffix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string message_;
  std::size_t offset_;
};

/// Invalid run configuration, manifest or command-line usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace cfpn
