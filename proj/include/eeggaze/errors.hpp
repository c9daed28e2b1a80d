#pragma once

#include <stdexcept>
#include <string>

namespace eeggaze {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible with the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A configuration violates one of its documented constraints.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced (or division by zero) while checked mode is on.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the autograd graph (non-scalar loss, detached or consumed graph).
class GraphError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// File-format validation errors. Each failure mode has its own type so
// callers can tell a corrupt file from a file meant for another shape.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ShapeMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace eeggaze
