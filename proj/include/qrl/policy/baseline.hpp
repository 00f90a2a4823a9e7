#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qrl/autodiff/adam.hpp"
#include "qrl/autodiff/network.hpp"
#include "qrl/random.hpp"

namespace qrl::policy {

/// One regression example for the baseline: initial observation, horizon, target.
struct BaselineSample {
  std::vector<double> s0;
  std::size_t horizon = 0;
  double target = 0.0;
};

/// B(s0, l | w): scalar network of the initial observation and the truncation horizon,
/// trained by mean-squared error. Independent of the policy parameters.
///
/// The horizon enters as l / max_horizon appended to s0.
class BaselineNet {
 public:
  BaselineNet(std::size_t observation_width, std::vector<std::size_t> hidden, std::size_t max_horizon,
              ad::AdamConfig optimizer, Rng& init_rng);

  const ad::Network& network() const { return net_; }
  std::vector<double>& weights() { return w_; }
  const std::vector<double>& weights() const { return w_; }
  ad::AdamState& optimizer() { return adam_; }
  std::size_t max_horizon() const { return max_horizon_; }

 private:
  ad::Network net_;
  std::vector<double> w_;
  ad::AdamState adam_;
  std::size_t max_horizon_;
};

double baseline_eval(const BaselineNet& net, std::span<const double> s0, std::size_t horizon);

/// One adaptive-moment step on the batch mean-squared error. Empty batch is a no-op.
/// Returns the batch loss before the step (0 for an empty batch).
double baseline_fit(BaselineNet& net, std::span<const BaselineSample> batch);

}  // namespace qrl::policy
