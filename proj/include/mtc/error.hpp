#pragma once

#include <stdexcept>
#include <string>

namespace mtc {

/// Base class for every error the library raises. `exit_code()` is the
/// process status the CLI uses when the error escapes a command.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Invalid hyperparameters, flags, patterns or API misuse.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class UsageError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Malformed files and inconsistent records.
class FormatError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class DataError : public FormatError {
 public:
  using FormatError::FormatError;
};

class LookupError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// NaN/Inf in a forward value or loss.
class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

}  // namespace mtc
