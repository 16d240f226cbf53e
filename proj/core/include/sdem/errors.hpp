#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace sdem {

/// Base of every error raised by the toolkit. The CLI maps the three
/// families below onto its exit codes (data 3, numerical 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument to a library call (negative sigma, unknown range, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input data violates a schema, is incomplete, or is inconsistent.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Schema violation tied to a location in an input file.
class ParseError : public DataError {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : DataError(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

/// Arithmetic left its domain: division by zero, log of a non-positive
/// value, extrapolation far outside a fitted span.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A fit or iterative solve failed to converge.
class FitFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace sdem
