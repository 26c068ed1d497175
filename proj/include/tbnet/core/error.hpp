#pragma once

#include <stdexcept>
#include <string>

namespace tbnet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or generator spec.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes or spatial sizes that an operation cannot accept.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/inf encountered where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed input values (labels out of range, non-binary targets, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Dataset or checkpoint could not be read.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// A file could not be written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A checkpoint does not match the data or config it is used with.
class ConfigConflictError : public Error {
 public:
  using Error::Error;
};

}  // namespace tbnet
