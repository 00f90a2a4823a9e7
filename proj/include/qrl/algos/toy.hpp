#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "qrl/policy/policy.hpp"
#include "qrl/quantile/tracker.hpp"
#include "qrl/random.hpp"

namespace qrl::algos {

/// Convex quantile toy: a one-step episode whose return is the action a ~ N(theta, 1).
/// q(alpha; theta) = theta + z_alpha increases in theta, so on [-1, 1] the optimum is theta = 1.
/// The policy is a bias-free linear head on the constant observation {1} with unit fixed scale.
std::shared_ptr<const policy::PolicyModel> toy_model();

struct ToySettings {
  double alpha = 0.25;
  quantile::StepSchedule beta = quantile::StepSchedule::polynomial(0.5, 0.7);
  quantile::StepSchedule gamma = quantile::StepSchedule::polynomial(0.1, 0.9);
  double theta0 = 0.0;
  double q0 = 0.0;
};

struct ToyTrace {
  std::vector<std::uint64_t> iteration;
  std::vector<double> theta;
  std::vector<double> q;
  /// (q_k - q(alpha; theta_k))^2 at each checkpoint.
  std::vector<double> squared_error;
};

/// Closed-form QPO recursions on the toy: sa_step on q, SGD on theta, projection onto [-1, 1].
/// Draws exactly what the generic agent draws (one standard normal per iteration from `rng`).
/// `checkpoints` must be increasing.
ToyTrace run_toy_qpo(const ToySettings& settings, std::span<const std::uint64_t> checkpoints, Rng& rng);

}  // namespace qrl::algos
