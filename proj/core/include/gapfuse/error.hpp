#pragma once

#include <stdexcept>
#include <string>

namespace gapfuse {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes, dimensions or settings that do not fit together.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Data values that violate an operation's precondition (labels, targets).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Malformed files.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// API called out of order, e.g. backward before forward.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace gapfuse
