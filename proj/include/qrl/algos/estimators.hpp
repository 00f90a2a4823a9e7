#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "qrl/algos/trajectory.hpp"
#include "qrl/autodiff/adam.hpp"
#include "qrl/policy/policy.hpp"
#include "qrl/quantile/tracker.hpp"

namespace qrl::algos {

/// Sum of the per-step (norm-clipped) scores over the first `steps` steps.
std::vector<double> score_sum(const Trajectory& traj, const policy::PolicyParams& params, std::size_t steps);

/// D = -1{U <= q} * sum_t grad log pi(a_t|s_t): zero when the return exceeds q.
/// Its norm never exceeds T * score bound.
std::vector<double> descent_direction(const Trajectory& traj, const policy::PolicyParams& params, double q,
                                      double discount);

/// prod_{t<l} pi(a_t|s_t; target) / pi(a_t|s_t; behavior), computed in log space.
double importance_ratio(const Trajectory& traj, std::size_t l, const policy::PolicyParams& target,
                        const policy::PolicyParams& behavior);

/// min(ratio * target, clip(ratio, 1 - eps, 1 + eps) * target).
double clipped_surrogate(double ratio, double advantage, double eps);

double l2_norm(std::span<const double> v);

/// Scales `v` down to norm `bound` if it is longer.
void clip_norm(std::vector<double>& v, double bound);

/// Gradient step on the flat policy parameters: plain stochastic approximation
/// (theta += lr * direction) or Adam ascent along `direction`. The learning rate follows
/// `schedule` indexed by the episode counter. Coordinates are projected onto the box after
/// every step.
class PolicyOptimizer {
 public:
  enum class Kind { sgd, adam };

  PolicyOptimizer(Kind kind, quantile::StepSchedule schedule, std::size_t size);

  void ascend(std::vector<double>& theta, std::span<const double> direction, std::uint64_t episode, double box);
  Kind kind() const { return kind_; }
  const quantile::StepSchedule& schedule() const { return schedule_; }

 private:
  Kind kind_;
  quantile::StepSchedule schedule_;
  ad::AdamState adam_;
};

/// Simultaneous-perturbation gains a_k = a / (k + 1 + A)^0.602, c_k = c / (k + 1)^0.101.
struct SpsaGains {
  double a = 0.1;
  double c = 0.1;
  double stability = 100.0;  // A
  double alpha_exponent = 0.602;
  double gamma_exponent = 0.101;

  double a_k(std::uint64_t k) const;
  double c_k(std::uint64_t k) const;
  /// Gains whose first step size a_0 equals `learning_rate`.
  static SpsaGains from_learning_rate(double learning_rate);
};

/// Rademacher direction with entries in {-1, +1}.
std::vector<double> rademacher(std::size_t n, Rng& rng);

/// Two-sided estimate (f(theta + c delta) - f(theta - c delta)) / (2c) * delta^{-1}
/// from the two objective values.
std::vector<double> spsa_gradient(double f_plus, double f_minus, double c, std::span<const double> delta);

/// One ascent iteration of SPSA on a deterministic or noisy objective `f`.
void spsa_step(std::vector<double>& theta, const std::function<double(std::span<const double>)>& f,
               const SpsaGains& gains, std::uint64_t k, Rng& rng);

}  // namespace qrl::algos
