#pragma once

#include <stdexcept>
#include <string>

namespace mrt {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Data that violates an operation's precondition (too short, empty, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Bad configuration values or mismatched config between artifacts.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed files.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered during training or gradient checking.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class UnsupportedOperation : public Error {
 public:
  using Error::Error;
};

}  // namespace mrt
