#pragma once

#include <stdexcept>
#include <string>

namespace elastodyn {

/// Non-finite or otherwise invalid argument to a pointwise evaluation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Violated precondition on shapes, sizes or parameters.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation not available for the given spec or space kind.
class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// An iterative numerical procedure failed; the message carries diagnostics.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Newton iteration for one time step did not reach the residual tolerance.
class NonConvergenceError : public NumericError {
 public:
  NonConvergenceError(const std::string& what, double last_residual, int iterations)
      : NumericError(what), last_residual_(last_residual), iterations_(iterations) {}

  double last_residual() const noexcept { return last_residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double last_residual_;
  int iterations_;
};

}  // namespace elastodyn
