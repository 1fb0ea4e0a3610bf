#pragma once

#include <stdexcept>
#include <string>

namespace pcssm {

// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Value outside the mathematical domain of an operation (e.g. 1/0, step <= 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Index list that is out of range or not a permutation.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Caller violated a precondition that is not a shape or index problem.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid model or layer configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input file.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace pcssm
