#pragma once

#include <stdexcept>
#include <string>

namespace frachelm {

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Special-function evaluation left the representable range.
class OverflowError : public std::overflow_error {
 public:
  OverflowError(const std::string& what, int mode) : std::overflow_error(what), mode_(mode) {}
  int mode() const noexcept { return mode_; }

 private:
  int mode_;
};

// Inconsistent solver inputs (e.g. fractional form of the wrong order).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Linear solve failed or produced an unacceptable residual.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Covariance that should be positive definite is not.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace frachelm

#include <vector>

namespace frachelm {

// Fixed-point iteration whose update norm kept growing; carries the update norms seen so far.
class DivergenceError : public SolverError {
 public:
  DivergenceError(const std::string& what, std::vector<double> history)
      : SolverError(what), history_(std::move(history)) {}
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

}  // namespace frachelm
