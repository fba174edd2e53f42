#pragma once

#include <stdexcept>
#include <string>

namespace contradist {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments or configuration (CLI exit code 1).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Matrix/vector dimensions that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or degenerate quantities during computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed CSV or JSON input. Carries the 1-based row when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row = 0)
      : Error(row == 0 ? what : "row " + std::to_string(row) + ": " + what),
        row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace contradist
