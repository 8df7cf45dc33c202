#pragma once

#include <stdexcept>
#include <string>

namespace amorph {

/// Shape or width mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Graph does not have the structure an operation requires (e.g. not a tree).
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A tree node has more children than a model was built for.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN or infinity where a finite value is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent training / harness configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Operation requested on an architecture that does not support it.
class UnsupportedArchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Series whose records disagree with each other (e.g. node count changes).
class InconsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace amorph
