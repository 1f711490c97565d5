#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ctxscale {

// Out-of-domain numeric input (non-finite, negative where positivity is required, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Input that parses but violates a record invariant (e.g. metric outside [0,1]).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Syntactically malformed input; carries the 1-based line number.
class ParseError : public ValidationError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A group of records that cannot be aggregated consistently.
class IntegrityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Fewer observations than free parameters.
class UnderdeterminedFitError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// File-system failures (missing input, unwritable output).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ctxscale
