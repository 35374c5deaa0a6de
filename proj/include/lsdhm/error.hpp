#pragma once

#include <stdexcept>
#include <string>

namespace lsdhm {

// Base for everything the library throws on purpose. The CLI maps the
// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or violated precondition on sizes (M > D, T < K, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Vector or tensor dimensions that do not agree with a model.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Unreadable files, malformed containers, bad labels.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or values during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace lsdhm
