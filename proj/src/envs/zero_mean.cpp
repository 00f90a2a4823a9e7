#include "qrl/envs/zero_mean.hpp"

#include <algorithm>
#include <string>

#include "qrl/errors.hpp"

namespace qrl::envs {

ZeroMeanEnv::ZeroMeanEnv(std::vector<double> values, std::size_t horizon)
    : values_(std::move(values)), horizon_(horizon), s_(values_) {
  if (values_.size() < 2) throw ConfigError("zero-mean environment needs at least two supports");
  if (horizon_ == 0) throw ConfigError("horizon must be positive");
  for (double v : values_) {
    if (!(v > 0.0)) throw ConfigError("zero-mean supports must be positive");
  }
}

double ZeroMeanEnv::reward_bound() const { return *std::max_element(values_.begin(), values_.end()); }

void ZeroMeanEnv::reshuffle() {
  // Fisher-Yates from explicit uniforms so the stream does not depend on the library's
  // integer distribution.
  for (std::size_t i = s_.size() - 1; i > 0; --i) {
    const auto j = std::min(i, static_cast<std::size_t>(uniform01(rng_) * static_cast<double>(i + 1)));
    std::swap(s_[i], s_[j]);
  }
}

std::vector<double> ZeroMeanEnv::reset() {
  s_ = values_;
  reshuffle();
  t_ = 0;
  return s_;
}

StepResult ZeroMeanEnv::step(const policy::Action& action) {
  if (action.discrete.size() != 1 || action.discrete[0] >= s_.size()) {
    throw UsageError("zero-mean action must be one index below " + std::to_string(s_.size()));
  }
  if (t_ >= horizon_) throw UsageError("step called after the episode ended");
  const double support = s_[action.discrete[0]];
  StepResult out;
  out.correct = support == *std::min_element(s_.begin(), s_.end());
  out.reward = support * (2.0 * uniform01(rng_) - 1.0);
  reshuffle();
  ++t_;
  out.done = t_ == horizon_;
  out.observation = s_;
  return out;
}

}  // namespace qrl::envs
