#include "qrl/autodiff/adam.hpp"

#include <cmath>

#include "qrl/errors.hpp"

namespace qrl::ad {

AdamState::AdamState(std::size_t size, AdamConfig cfg)
    : config(cfg), first_moment(size, 0.0), second_moment(size, 0.0) {}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad) {
  if (params.size() != grad.size() || params.size() != state.first_moment.size()) {
    throw UsageError("adam_step: parameter, gradient and moment sizes differ");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw TrainingError("adam_step: non-finite gradient");
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * grad[i];
    v = c.beta2 * v + (1.0 - c.beta2) * grad[i] * grad[i];
    params[i] -= c.learning_rate * (m / correction1) / (std::sqrt(v / correction2) + c.epsilon);
  }
}

}  // namespace qrl::ad
