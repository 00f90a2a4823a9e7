#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace qrl::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for one parameter vector.
struct AdamState {
  AdamConfig config;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(std::size_t size, AdamConfig cfg);
};

/// One bias-corrected adaptive-moment step that *descends* along `grad`:
/// params -= lr * m_hat / (sqrt(v_hat) + eps). Throws TrainingError if `grad` is not finite
/// and UsageError if the shapes disagree.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad);

}  // namespace qrl::ad
