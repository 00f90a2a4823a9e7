#include "qrl/envs/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qrl/errors.hpp"

namespace qrl::envs {

namespace {

void check_distribution(const std::vector<double>& p, const char* what) {
  double total = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw ConfigError(std::string(what) + " has a negative probability");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError(std::string(what) + " does not sum to one");
}

std::size_t draw(const std::vector<double>& p, Rng& rng) {
  return policy::sample_categorical(p, uniform01(rng));
}

}  // namespace

void TabularMdp::validate() const {
  if (states == 0 || actions == 0 || horizon == 0) throw ConfigError("tabular MDP extents must be positive");
  if (initial.size() != states || transition.size() != states * actions * states ||
      reward.size() != states * actions) {
    throw ConfigError("tabular MDP tables have the wrong size");
  }
  check_distribution(initial, "initial distribution");
  for (std::size_t sa = 0; sa < states * actions; ++sa) {
    check_distribution({transition.begin() + static_cast<std::ptrdiff_t>(sa * states),
                        transition.begin() + static_cast<std::ptrdiff_t>((sa + 1) * states)},
                       "transition row");
    if (reward[sa].value.empty() || reward[sa].value.size() != reward[sa].prob.size()) {
      throw ConfigError("reward law needs matching value and probability lists");
    }
    check_distribution(reward[sa].prob, "reward law");
  }
}

TabularMdp TabularMdp::bandit(std::vector<RewardLaw> laws) {
  TabularMdp m;
  m.states = 1;
  m.actions = laws.size();
  m.horizon = 1;
  m.initial = {1.0};
  m.transition.assign(m.actions, 1.0);
  m.reward = std::move(laws);
  m.validate();
  return m;
}

TabularEnv::TabularEnv(TabularMdp mdp) : mdp_(std::move(mdp)) { mdp_.validate(); }

double TabularEnv::reward_bound() const {
  double bound = 0.0;
  for (const auto& law : mdp_.reward) {
    for (double v : law.value) bound = std::max(bound, std::abs(v));
  }
  return bound;
}

std::vector<double> TabularEnv::one_hot() const {
  std::vector<double> x(mdp_.states, 0.0);
  x[s_] = 1.0;
  return x;
}

std::vector<double> TabularEnv::reset() {
  s_ = draw(mdp_.initial, rng_);
  t_ = 0;
  return one_hot();
}

StepResult TabularEnv::step(const policy::Action& action) {
  if (action.discrete.size() != 1 || action.discrete[0] >= mdp_.actions) throw UsageError("tabular action out of range");
  if (t_ >= mdp_.horizon) throw UsageError("step called after the episode ended");
  const std::size_t a = action.discrete[0];
  const RewardLaw& law = mdp_.r(s_, a);
  StepResult out;
  out.reward = law.value[draw(law.prob, rng_)];
  std::vector<double> row(mdp_.states);
  for (std::size_t n = 0; n < mdp_.states; ++n) row[n] = mdp_.p(s_, a, n);
  s_ = draw(row, rng_);
  ++t_;
  out.done = t_ == mdp_.horizon;
  out.observation = one_hot();
  return out;
}

StepResult ActionEchoEnv::step(const policy::Action& action) {
  if (action.value.size() != 1) throw UsageError("action echo expects a scalar action");
  StepResult out;
  out.reward = action.value[0];
  out.done = true;
  out.observation = {1.0};
  return out;
}

}  // namespace qrl::envs
