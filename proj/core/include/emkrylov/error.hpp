#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace emkrylov {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or configuration value.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Tree file syntax error, with the 1-based position of the offending token.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& what)
      : Error("line " + std::to_string(line) + ", column " +
              std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Structurally valid input that violates a model invariant (cycle, dangling
/// id, nonpositive geometry, ...).
class SemanticError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// All-zero seed vector handed to a Krylov process.
class DegenerateInputError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Input vector has a component along the left nullvector of a singular
/// conservative operator, so no steady state exists.
class ConservationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Tuner reference or search could not produce a usable result.
class SearchError : public Error {
 public:
  using Error::Error;
};

}  // namespace emkrylov
