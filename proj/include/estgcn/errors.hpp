#pragma once

#include <stdexcept>
#include <string>

namespace estgcn {

// Malformed or out-of-contract input (CLI exit code 2).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical failure: non-finite values, non-convergence (CLI exit code 3).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent configuration, e.g. a loss branch that needs a missing fit.
class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

}  // namespace estgcn
