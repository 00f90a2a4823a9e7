#include "qrl/algos/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "qrl/errors.hpp"

namespace qrl::algos {

std::vector<double> score_sum(const Trajectory& traj, const policy::PolicyParams& params, std::size_t steps) {
  if (steps > traj.length()) throw UsageError("score_sum: more steps than the trajectory holds");
  std::vector<double> total(params.theta.size(), 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    const auto g = policy::score(params, traj.state(t), traj.actions[t]);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += g[i];
  }
  return total;
}

std::vector<double> descent_direction(const Trajectory& traj, const policy::PolicyParams& params, double q,
                                      double discount) {
  if (traj.discounted_return(discount) > q) return std::vector<double>(params.theta.size(), 0.0);
  auto d = score_sum(traj, params, traj.length());
  for (double& x : d) x = -x;
  return d;
}

double importance_ratio(const Trajectory& traj, std::size_t l, const policy::PolicyParams& target,
                        const policy::PolicyParams& behavior) {
  if (l > traj.length()) throw UsageError("importance_ratio: prefix longer than the trajectory");
  double log_ratio = 0.0;
  for (std::size_t t = 0; t < l; ++t) {
    const double lb = policy::log_density(behavior, traj.state(t), traj.actions[t]);
    if (!std::isfinite(lb)) throw TrainingError("behavior policy gives zero density to a taken action");
    log_ratio += policy::log_density(target, traj.state(t), traj.actions[t]) - lb;
  }
  return std::exp(log_ratio);
}

double clipped_surrogate(double ratio, double advantage, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("clip parameter must lie in (0, 1)");
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void clip_norm(std::vector<double>& v, double bound) {
  const double n = l2_norm(v);
  if (n > bound && n > 0.0) {
    const double f = bound / n;
    for (double& x : v) x *= f;
  }
}

PolicyOptimizer::PolicyOptimizer(Kind kind, quantile::StepSchedule schedule, std::size_t size)
    : kind_(kind), schedule_(schedule), adam_(size, ad::AdamConfig{}) {}

void PolicyOptimizer::ascend(std::vector<double>& theta, std::span<const double> direction, std::uint64_t episode,
                             double box) {
  if (direction.size() != theta.size()) throw UsageError("ascend: direction size mismatch");
  const double lr = schedule_.at(episode);
  if (kind_ == Kind::sgd) {
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += lr * direction[i];
  } else if (lr > 0.0) {
    std::vector<double> grad(direction.size());
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = -direction[i];
    adam_.config.learning_rate = lr;
    ad::adam_step(adam_, theta, grad);
  }
  policy::project_in_place(theta, box);
}

double SpsaGains::a_k(std::uint64_t k) const {
  return a / std::pow(static_cast<double>(k) + 1.0 + stability, alpha_exponent);
}

double SpsaGains::c_k(std::uint64_t k) const { return c / std::pow(static_cast<double>(k) + 1.0, gamma_exponent); }

SpsaGains SpsaGains::from_learning_rate(double learning_rate) {
  SpsaGains g;
  g.a = learning_rate * std::pow(1.0 + g.stability, g.alpha_exponent);
  return g;
}

std::vector<double> rademacher(std::size_t n, Rng& rng) {
  std::vector<double> d(n);
  for (double& x : d) x = uniform01(rng) < 0.5 ? -1.0 : 1.0;
  return d;
}

std::vector<double> spsa_gradient(double f_plus, double f_minus, double c, std::span<const double> delta) {
  std::vector<double> g(delta.size());
  const double diff = (f_plus - f_minus) / (2.0 * c);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = diff / delta[i];
  return g;
}

void spsa_step(std::vector<double>& theta, const std::function<double(std::span<const double>)>& f,
               const SpsaGains& gains, std::uint64_t k, Rng& rng) {
  const auto delta = rademacher(theta.size(), rng);
  const double c = gains.c_k(k);
  std::vector<double> plus(theta), minus(theta);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    plus[i] += c * delta[i];
    minus[i] -= c * delta[i];
  }
  const auto g = spsa_gradient(f(plus), f(minus), c, delta);
  const double a = gains.a_k(k);
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += a * g[i];
}

}  // namespace qrl::algos
