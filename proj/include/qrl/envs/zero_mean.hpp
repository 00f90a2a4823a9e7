#pragma once

#include <vector>

#include "qrl/envs/environment.hpp"

namespace qrl::envs {

/// r_t ~ Uniform(-s_t[a_t], s_t[a_t]); s_t is a fresh uniform permutation of s_{t-1}.
/// Every policy has zero expected return, but picking argmin s_t tightens the lower tail.
class ZeroMeanEnv final : public Environment {
 public:
  ZeroMeanEnv(std::vector<double> values, std::size_t horizon);

  static ZeroMeanEnv simple() { return ZeroMeanEnv({1.0, 4.0, 9.0}, 20); }
  static ZeroMeanEnv hard() { return ZeroMeanEnv({0.1, 0.2, 0.3, 0.4, 0.5}, 20); }

  std::string name() const override { return "zero_mean"; }
  std::size_t horizon() const override { return horizon_; }
  policy::ActionSpec action_spec() const override { return policy::ActionSpec::categorical(values_.size()); }
  std::size_t observation_width() const override { return values_.size(); }
  double reward_bound() const override;

  std::vector<double> reset() override;
  StepResult step(const policy::Action& action) override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<ZeroMeanEnv>(*this); }

  const std::vector<double>& state() const { return s_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t time() const { return t_; }

 private:
  void reshuffle();

  std::vector<double> values_;
  std::size_t horizon_;
  std::vector<double> s_;
  std::size_t t_ = 0;
};

}  // namespace qrl::envs
