#pragma once

#include <stdexcept>
#include <string>

namespace qrl {

/// Invalid configuration or malformed input detected before any simulation runs.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// API misuse by the caller (wrong shapes at call time, out-of-range actions, ...).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Numerical failure during training (non-finite gradients, returns, network outputs).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qrl
