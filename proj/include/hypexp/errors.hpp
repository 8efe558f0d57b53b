#pragma once

#include <stdexcept>
#include <string>

namespace hypexp {

/// Raised when an argument violates an operation's precondition
/// (malformed vectors, domination failure, parameters out of range).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised on numerical hard failures: non-convergent inversions, singular
/// Jacobians, a collapsing tracked direction, runaway reductions.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by configuration parsing; carries a user-facing message.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hypexp
