#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace deermc {

/// Invalid run or model configuration (undeclared noise slot, bad hyperparameter).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Index outside a declared range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Shape, variant or dimension mismatch between operands.
class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition of a numerical routine was violated by its input data.
class ContractError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed input file; carries the offending 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A chain or solver iterate produced non-finite values at step `step`.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace deermc
