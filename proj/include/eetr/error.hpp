#pragma once

#include <stdexcept>
#include <string>

namespace eetr {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: corpus files, annotation sidecars, checkpoints, configs.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument combination (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace eetr
