#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace voltreg {

// Base for every error the library raises on bad input or numerics.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Network graph is not a tree rooted at a single slack node, or carries
// invalid electrical parameters.
class InvalidTopology : public Error {
 public:
  using Error::Error;
};

// Malformed file (wrong header, column count, unparsable number).
class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Time series with duplicated, missing or non-uniform timestamps.
class GapError : public Error {
 public:
  GapError(const std::string& what, std::size_t row)
      : Error(what + " (row " + std::to_string(row) + ")"), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// A correction segment (or a whole history) has too few points to fit.
class UnderdeterminedSegment : public Error {
 public:
  using Error::Error;
};

// Numerical failure that aborts a computation (NaN in training, PF
// divergence that ends an episode).
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace voltreg
