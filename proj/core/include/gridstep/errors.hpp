#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gridstep {

/// Malformed case or JSON input. Carries the 1-based line and column when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
      : std::runtime_error(format(what, line, column)), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& what, std::size_t line, std::size_t column) {
    if (line == 0) return what;
    return "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what;
  }

  std::size_t line_;
  std::size_t column_;
};

/// A required section of an input is missing, or two layouts cannot be reconciled.
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Network data or a delta violates a model invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operation was asked to work on a state it does not accept (wrong layout, unconverged).
class StatusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments to a public entry point (e.g. an OPF start that is not strictly interior).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace gridstep
