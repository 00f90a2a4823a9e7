#pragma once

#include <deque>
#include <span>
#include <vector>

#include "qrl/envs/environment.hpp"

namespace qrl::envs {

struct MarketParams {
  std::vector<double> drift;
  /// Row-major N x N square root of the covariance.
  std::vector<double> vol_root;

  std::size_t assets() const { return drift.size(); }
  /// Three assets; the last two have opposite shocks and hedge each other perfectly.
  static MarketParams perfectly_hedgeable();
  /// Five assets in two imperfect hedging pairs plus a low-risk asset.
  static MarketParams imperfectly_hedgeable();
};

/// One Euler-Maruyama step: p' = p * (1 + mu dt + vol_root sqrt(dt) eps), with the
/// per-asset multiplier floored at 1e-6 so prices stay positive.
std::vector<double> gbm_step(std::span<const double> p, const MarketParams& market, double dt,
                             std::span<const double> eps);
std::vector<double> gbm_step(std::span<const double> p, const MarketParams& market, double dt, Rng& rng);

/// New positions after moving to value weights `alloc` at prices `p`:
/// w' = w + (1 - f)[x - w]^+ - [x - w]^-, x = alloc * v / p. Buying pays the fee.
/// Throws UsageError if `alloc` is off the simplex by more than 1e-6.
std::vector<double> rebalance_positions(std::span<const double> w, std::span<const double> p,
                                        std::span<const double> alloc, double fee);

double portfolio_value(std::span<const double> w, std::span<const double> p);

struct PortfolioConfig {
  MarketParams market = MarketParams::perfectly_hedgeable();
  std::size_t horizon = 100;
  double fee = 0.001;
  double initial_value = 100.0;
  std::size_t stats_window = 25;
  double initial_log_std = -0.5;
};

/// Observation: positions scaled by 1/v0, prices, and the window mean / standard deviation of
/// the profit margins dp/p, rescaled by 1/dt and 1/sqrt(dt).
class PortfolioEnv final : public Environment {
 public:
  explicit PortfolioEnv(PortfolioConfig config);

  std::string name() const override { return "portfolio"; }
  std::size_t horizon() const override { return cfg_.horizon; }
  policy::ActionSpec action_spec() const override {
    return policy::ActionSpec::simplex(cfg_.market.assets(), cfg_.initial_log_std);
  }
  std::size_t observation_width() const override { return 4 * cfg_.market.assets(); }

  std::vector<double> reset() override;
  StepResult step(const policy::Action& action) override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<PortfolioEnv>(*this); }

  const PortfolioConfig& config() const { return cfg_; }
  double dt() const { return 1.0 / static_cast<double>(cfg_.horizon); }
  const std::vector<double>& prices() const { return p_; }
  const std::vector<double>& positions() const { return w_; }
  double value() const { return v_; }

 private:
  std::vector<double> observe() const;

  PortfolioConfig cfg_;
  std::vector<double> p_, w_;
  double v_ = 0.0;
  std::size_t t_ = 0;
  std::deque<std::vector<double>> margins_;
};

}  // namespace qrl::envs
