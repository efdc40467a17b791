#pragma once

#include <stdexcept>
#include <string>

namespace eqmix {

// Bad parameters, malformed configurations, invalid states.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A kernel that is not stochastic / not reversible / not compatible with
// the operation requested.
class KernelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A theorem's hypotheses do not hold for the given input.
class HypothesisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Problem too large for the exact (enumerative or dense) route.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Iterative numerical routine failed to converge.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace eqmix
