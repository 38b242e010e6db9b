#pragma once

#include <stdexcept>
#include <string>

namespace tckin {

/// Base of every exception thrown by the library. The CLI maps subclasses to
/// exit codes (config 1, data 2, numerical 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace tckin
