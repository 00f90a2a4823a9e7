#include "qrl/envs/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qrl/errors.hpp"

namespace qrl::envs {

MarketParams MarketParams::perfectly_hedgeable() {
  return {{0.01, 0.08, 0.16},
          {0.01, 0.0, 0.0,  //
           0.0, 0.08, -0.08,
           0.0, -0.08, 0.08}};
}

MarketParams MarketParams::imperfectly_hedgeable() {
  return {{0.01, 0.02, 0.03, 0.04, 0.05},
          {0.01, 0.0, 0.0, 0.0, 0.0,  //
           0.0, 0.04, -0.055, 0.0, 0.0,
           0.0, -0.055, 0.09, 0.0, 0.0,
           0.0, 0.0, 0.0, 0.16, -0.19,
           0.0, 0.0, 0.0, -0.19, 0.25}};
}

std::vector<double> gbm_step(std::span<const double> p, const MarketParams& market, double dt,
                             std::span<const double> eps) {
  const std::size_t n = market.assets();
  if (p.size() != n || eps.size() != n || market.vol_root.size() != n * n) {
    throw ConfigError("price, shock and volatility dimensions disagree");
  }
  if (!(dt > 0.0)) throw ConfigError("time step must be positive");
  const double sqrt_dt = std::sqrt(dt);
  std::vector<double> next(n);
  for (std::size_t i = 0; i < n; ++i) {
    double shock = 0.0;
    for (std::size_t j = 0; j < n; ++j) shock += market.vol_root[i * n + j] * eps[j];
    const double multiplier = std::max(1.0 + market.drift[i] * dt + shock * sqrt_dt, 1e-6);
    next[i] = p[i] * multiplier;
  }
  return next;
}

std::vector<double> gbm_step(std::span<const double> p, const MarketParams& market, double dt, Rng& rng) {
  std::vector<double> eps(market.assets());
  for (double& e : eps) e = standard_normal(rng);
  return gbm_step(p, market, dt, eps);
}

double portfolio_value(std::span<const double> w, std::span<const double> p) {
  return std::inner_product(w.begin(), w.end(), p.begin(), 0.0);
}

std::vector<double> rebalance_positions(std::span<const double> w, std::span<const double> p,
                                        std::span<const double> alloc, double fee) {
  if (w.size() != p.size() || alloc.size() != p.size()) throw UsageError("rebalance: dimension mismatch");
  if (!(fee >= 0.0 && fee < 1.0)) throw ConfigError("fee must lie in [0, 1)");
  double total = 0.0;
  for (double a : alloc) {
    if (!(a >= -1e-6)) throw UsageError("allocation has a negative weight");
    total += a;
  }
  if (std::abs(total - 1.0) > 1e-6) throw UsageError("allocation does not sum to one");
  const double v = portfolio_value(w, p);
  std::vector<double> next(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double gap = alloc[i] * v / p[i] - w[i];
    next[i] = w[i] + (1.0 - fee) * std::max(gap, 0.0) - std::max(-gap, 0.0);
  }
  return next;
}

PortfolioEnv::PortfolioEnv(PortfolioConfig config) : cfg_(std::move(config)) {
  const std::size_t n = cfg_.market.assets();
  if (n == 0 || cfg_.market.vol_root.size() != n * n) throw ConfigError("market parameters are inconsistent");
  if (cfg_.horizon == 0 || cfg_.stats_window == 0) throw ConfigError("horizon and stats window must be positive");
  if (!(cfg_.initial_value > 0.0)) throw ConfigError("initial value must be positive");
  if (!(cfg_.fee >= 0.0 && cfg_.fee < 1.0)) throw ConfigError("fee must lie in [0, 1)");
}

std::vector<double> PortfolioEnv::reset() {
  const std::size_t n = cfg_.market.assets();
  p_.assign(n, 1.0);
  // Uniform point on the simplex via normalized exponentials.
  std::vector<double> weights(n);
  for (double& x : weights) x = -std::log(1.0 - uniform01(rng_));
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  w_.resize(n);
  for (std::size_t i = 0; i < n; ++i) w_[i] = weights[i] / total * cfg_.initial_value / p_[i];
  v_ = portfolio_value(w_, p_);
  t_ = 0;
  margins_.clear();
  return observe();
}

StepResult PortfolioEnv::step(const policy::Action& action) {
  if (t_ >= cfg_.horizon) throw UsageError("step called after the episode ended");
  w_ = rebalance_positions(w_, p_, action.value, cfg_.fee);
  const auto next = gbm_step(p_, cfg_.market, dt(), rng_);
  std::vector<double> margin(next.size());
  for (std::size_t i = 0; i < next.size(); ++i) margin[i] = (next[i] - p_[i]) / p_[i];
  margins_.push_back(std::move(margin));
  if (margins_.size() > cfg_.stats_window) margins_.pop_front();
  p_ = next;
  const double v_next = portfolio_value(w_, p_);
  StepResult out;
  out.reward = v_next - v_;
  v_ = v_next;
  ++t_;
  out.done = t_ == cfg_.horizon;
  out.observation = observe();
  return out;
}

std::vector<double> PortfolioEnv::observe() const {
  const std::size_t n = cfg_.market.assets();
  std::vector<double> obs(4 * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    obs[i] = w_[i] / cfg_.initial_value;
    obs[n + i] = p_[i];
  }
  if (margins_.empty()) return obs;
  const double count = static_cast<double>(margins_.size());
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0, sq = 0.0;
    for (const auto& m : margins_) mean += m[i];
    mean /= count;
    for (const auto& m : margins_) sq += (m[i] - mean) * (m[i] - mean);
    obs[2 * n + i] = mean / dt();
    obs[3 * n + i] = std::sqrt(sq / count) / std::sqrt(dt());
  }
  return obs;
}

}  // namespace qrl::envs
