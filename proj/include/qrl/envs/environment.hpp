#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qrl/policy/policy.hpp"
#include "qrl/random.hpp"

namespace qrl::envs {

struct StepResult {
  std::vector<double> observation;
  double reward = 0.0;
  bool done = false;
  /// Task metric for the step just taken, when the environment defines one
  /// (Zero-Mean: whether the chosen support was the smallest).
  std::optional<bool> correct;
};

/// Episodic environment with a fixed horizon. Each instance owns its noise stream.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual std::size_t horizon() const = 0;
  virtual policy::ActionSpec action_spec() const = 0;
  /// Flattened observation width and the length of its leading time axis (1 unless the
  /// observation is a history meant for temporal convolution).
  virtual std::size_t observation_width() const = 0;
  virtual std::size_t observation_steps() const { return 1; }
  /// sup |r_t| when rewards are bounded, +inf otherwise.
  virtual double reward_bound() const { return std::numeric_limits<double>::infinity(); }

  virtual std::vector<double> reset() = 0;
  virtual StepResult step(const policy::Action& action) = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  void seed(std::uint64_t s) { rng_.seed(s); }
  Rng& rng() { return rng_; }

 protected:
  Rng rng_{0};
};

}  // namespace qrl::envs
