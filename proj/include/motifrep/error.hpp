#pragma once

#include <stdexcept>
#include <string>

namespace motifrep {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: malformed files, invalid node sets, inconsistent options.
/// The CLI maps this family to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : ValidationError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : ValidationError(what) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

class InvalidSetError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Exact enumeration refused because the instance is too large.
class CapExceededError : public ValidationError {
 public:
  CapExceededError(const std::string& what, double cap) : ValidationError(what), cap_(cap) {}
  double cap() const noexcept { return cap_; }

 private:
  double cap_;
};

/// Runtime failures (exit code 3 in the CLI).
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConstructionError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

}  // namespace motifrep
