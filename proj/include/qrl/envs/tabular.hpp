#pragma once

#include <cstddef>
#include <vector>

#include "qrl/envs/environment.hpp"

namespace qrl::envs {

/// Discrete reward law: value[k] with probability prob[k].
struct RewardLaw {
  std::vector<double> value;
  std::vector<double> prob;
};

/// Finite-horizon MDP with explicit tables, small enough to enumerate every trajectory.
struct TabularMdp {
  std::size_t states = 1;
  std::size_t actions = 2;
  std::size_t horizon = 1;
  std::vector<double> initial;                       // p(s0)
  std::vector<double> transition;                    // [s][a][s'] flattened
  std::vector<RewardLaw> reward;                     // [s][a] flattened

  double p(std::size_t s, std::size_t a, std::size_t next) const {
    return transition[(s * actions + a) * states + next];
  }
  const RewardLaw& r(std::size_t s, std::size_t a) const { return reward[s * actions + a]; }
  /// Throws ConfigError unless every table is a well-formed distribution of the right size.
  void validate() const;

  /// One state, `arms` actions, one step; arm k pays law[k].
  static TabularMdp bandit(std::vector<RewardLaw> laws);
};

/// Runs a TabularMdp. The observation is the one-hot current state.
class TabularEnv final : public Environment {
 public:
  explicit TabularEnv(TabularMdp mdp);

  std::string name() const override { return "tabular"; }
  std::size_t horizon() const override { return mdp_.horizon; }
  policy::ActionSpec action_spec() const override { return policy::ActionSpec::categorical(mdp_.actions); }
  std::size_t observation_width() const override { return mdp_.states; }
  double reward_bound() const override;

  std::vector<double> reset() override;
  StepResult step(const policy::Action& action) override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<TabularEnv>(*this); }

  const TabularMdp& mdp() const { return mdp_; }

 private:
  std::vector<double> one_hot() const;

  TabularMdp mdp_;
  std::size_t s_ = 0;
  std::size_t t_ = 0;
};

/// Single step; the reward is the scalar action itself. Paired with a Gaussian policy whose
/// mean is theta, the return is N(theta, sigma^2) and every quantile increases with theta.
class ActionEchoEnv final : public Environment {
 public:
  std::string name() const override { return "action_echo"; }
  std::size_t horizon() const override { return 1; }
  policy::ActionSpec action_spec() const override { return policy::ActionSpec::gaussian(1, 0.0, false); }
  std::size_t observation_width() const override { return 1; }

  std::vector<double> reset() override { return {1.0}; }
  StepResult step(const policy::Action& action) override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<ActionEchoEnv>(*this); }
};

}  // namespace qrl::envs
