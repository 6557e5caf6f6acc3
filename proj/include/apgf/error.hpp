#pragma once

#include <stdexcept>
#include <string>

namespace apgf {

// Base for every error the library raises. The CLI maps the concrete type to
// its exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid arguments, inconsistent shapes, broken invariants of input data.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed file content. `field()` names the offending field.
class ParseError : public ValidationError {
 public:
  ParseError(std::string field, const std::string& what)
      : ValidationError("field '" + field + "': " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// NaN/Inf produced by a numeric op, or an unusable numeric state.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Exhaustive search refused because the graph exceeds the configured cap.
class CapExceededError : public Error {
 public:
  using Error::Error;
};

}  // namespace apgf
