#pragma once

#include <stdexcept>
#include <string>

namespace tmcdr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or configuration value (CLI exit code 1).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

/// Problems with input data or artifacts (CLI exit code 2).
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EmptyDatasetError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyOverlapError : public DataError {
 public:
  using DataError::DataError;
};

class SplitError : public DataError {
 public:
  using DataError::DataError;
};

class SamplingError : public DataError {
 public:
  using DataError::DataError;
};

class LookupError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite values during training or in a numerical oracle (CLI exit code 3).
class NumericError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

class OracleError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace tmcdr
