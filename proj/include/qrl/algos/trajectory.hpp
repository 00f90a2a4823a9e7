#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qrl/autodiff/tensor.hpp"
#include "qrl/envs/environment.hpp"
#include "qrl/policy/policy.hpp"

namespace qrl::algos {

/// One episode: the state seen before each action, the action, its log-density under the
/// policy that generated it, and the reward that followed.
struct Trajectory {
  std::size_t observation_width = 0;
  std::vector<double> observations;  // row t is s_t, t = 0..T-1
  std::vector<policy::Action> actions;
  std::vector<double> log_density;
  std::vector<double> rewards;
  std::size_t correct = 0;  // task metric: steps judged correct
  std::size_t judged = 0;   // task metric: steps that carry a verdict

  std::size_t length() const { return rewards.size(); }
  std::span<const double> state(std::size_t t) const;
  /// Rows [begin, end) of the observations as a matrix.
  ad::Tensor observation_rows(std::size_t begin, std::size_t end) const;

  /// U(tau^l) = sum_{t<l} discount^t r_t.
  double prefix_return(std::size_t l, double discount) const;
  double discounted_return(double discount) const { return prefix_return(length(), discount); }
  /// Fraction of judged steps marked correct; NaN when no step carries a verdict.
  double accuracy() const;
};

/// Plays one episode under `params`. Actions are sampled from `policy_rng`; the environment
/// draws from its own stream. With `greedy` the mode action is taken instead.
Trajectory rollout(envs::Environment& env, const policy::PolicyParams& params, Rng& policy_rng,
                   bool greedy = false);

/// Discounted reward-to-go G_t = sum_{u>=t} discount^{u-t} r_u.
std::vector<double> reward_to_go(std::span<const double> rewards, double discount);

}  // namespace qrl::algos
