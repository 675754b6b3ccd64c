#pragma once

#include <stdexcept>
#include <string>

namespace proxtree {

// Base for every error raised by the library. The exit code is what the CLI
// returns when the error escapes a command.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

// Bad flags, inconsistent settings, impossible sizes.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

// Malformed or inconsistent input data.
class InputError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

// A computation that cannot produce a meaningful number.
class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

}  // namespace proxtree
