#include "qrl/algos/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qrl/errors.hpp"

namespace qrl::algos {

std::span<const double> Trajectory::state(std::size_t t) const {
  return std::span<const double>(observations).subspan(t * observation_width, observation_width);
}

ad::Tensor Trajectory::observation_rows(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > length()) throw UsageError("observation_rows: empty or out-of-range row span");
  const auto first = observations.begin() + static_cast<std::ptrdiff_t>(begin * observation_width);
  const auto last = observations.begin() + static_cast<std::ptrdiff_t>(end * observation_width);
  return ad::Tensor(end - begin, observation_width, std::vector<double>(first, last));
}

double Trajectory::prefix_return(std::size_t l, double discount) const {
  if (l > length()) throw UsageError("prefix longer than the trajectory");
  double total = 0.0, weight = 1.0;
  for (std::size_t t = 0; t < l; ++t) {
    total += weight * rewards[t];
    weight *= discount;
  }
  return total;
}

double Trajectory::accuracy() const {
  if (judged == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(correct) / static_cast<double>(judged);
}

Trajectory rollout(envs::Environment& env, const policy::PolicyParams& params, Rng& policy_rng, bool greedy) {
  Trajectory traj;
  traj.observation_width = env.observation_width();
  const std::size_t horizon = env.horizon();
  traj.observations.reserve(horizon * traj.observation_width);
  traj.actions.reserve(horizon);
  traj.log_density.reserve(horizon);
  traj.rewards.reserve(horizon);
  std::vector<double> s = env.reset();
  for (bool done = false; !done;) {
    if (s.size() != traj.observation_width) throw TrainingError("environment emitted a state of the wrong width");
    traj.observations.insert(traj.observations.end(), s.begin(), s.end());
    policy::Action a;
    double lp = 0.0;
    if (greedy) {
      a = policy::mode_action(params, s);
    } else {
      auto r = policy::act(params, s, policy_rng);
      a = std::move(r.action);
      lp = r.log_density;
    }
    envs::StepResult step = env.step(a);
    if (!std::isfinite(step.reward)) throw TrainingError("environment emitted a non-finite reward");
    traj.actions.push_back(std::move(a));
    traj.log_density.push_back(lp);
    traj.rewards.push_back(step.reward);
    if (step.correct) {
      ++traj.judged;
      traj.correct += *step.correct ? 1 : 0;
    }
    s = std::move(step.observation);
    done = step.done;
  }
  return traj;
}

std::vector<double> reward_to_go(std::span<const double> rewards, double discount) {
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + discount * acc;
    g[t] = acc;
  }
  return g;
}

}  // namespace qrl::algos
