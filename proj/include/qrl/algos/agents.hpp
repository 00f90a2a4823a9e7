#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qrl/algos/estimators.hpp"
#include "qrl/algos/trajectory.hpp"
#include "qrl/envs/environment.hpp"
#include "qrl/policy/baseline.hpp"
#include "qrl/policy/policy.hpp"
#include "qrl/quantile/tracker.hpp"

namespace qrl::algos {

enum class QuantileRule { sa, adam };

struct AgentConfig {
  double alpha = 0.25;
  double discount = 0.99;

  PolicyOptimizer::Kind optimizer = PolicyOptimizer::Kind::adam;
  quantile::StepSchedule policy_lr = quantile::StepSchedule::staircase(1e-3, 0.8, 2500);

  QuantileRule quantile_rule = QuantileRule::adam;
  quantile::StepSchedule quantile_lr = quantile::StepSchedule::staircase(0.01, 0.9, 2500);
  std::size_t warm_start_episodes = 32;

  // Truncated horizons T0..T and clipping (quantile surrogate and PPO).
  std::size_t truncation_min = 16;
  double clip = 0.2;
  std::vector<std::size_t> baseline_hidden{8, 8};
  double baseline_lr = 1e-3;
  // Episodes pooled into one surrogate (1 = one inner pass per episode) and passes over them.
  std::size_t qppo_batch_episodes = 1;
  std::size_t qppo_epochs = 1;

  // Mean-criterion PPO.
  std::size_t update_interval = 2000;
  std::size_t epochs = 4;
  std::size_t minibatch = 256;

  // SPSA.
  std::size_t spsa_batch = 10;
  double spsa_lr_multiplier = 1.0;
};

/// What one training episode produced.
struct EpisodeReport {
  double episode_return = 0.0;  // discounted return of the episode that was played
  double accuracy = 0.0;        // task metric, NaN when the environment has none
  double tracker = 0.0;         // current quantile estimate (q, or q^T for the bank); NaN for mean methods
  std::size_t updates = 0;      // parameter updates applied during the call
  double direction_norm = 0.0;  // largest likelihood-ratio direction norm emitted, 0 if none
};

/// Runtime streams an agent draws from; the environment owns its own.
struct Streams {
  Rng policy;
  Rng shuffle;
};

class Agent {
 public:
  Agent(std::shared_ptr<const policy::PolicyModel> model, AgentConfig config, Rng& init_rng);
  virtual ~Agent() = default;

  virtual std::string name() const = 0;
  /// Plays one episode and applies whatever updates the algorithm prescribes for it.
  virtual EpisodeReport train_episode(envs::Environment& env, Streams& streams) = 0;
  /// Initializes quantile estimates from pilot episodes under the current policy (no-op for mean methods).
  virtual void warm_start(envs::Environment& env, Streams& streams);
  virtual double tracker_value() const;
  /// Quantile state for checkpoints and metrics.
  virtual nlohmann::json tracker_json() const { return nullptr; }
  virtual void restore_tracker(const nlohmann::json&) {}

  const policy::PolicyParams& policy() const { return params_; }
  policy::PolicyParams& policy() { return params_; }
  const AgentConfig& config() const { return cfg_; }
  std::uint64_t episodes() const { return episode_; }

 protected:
  double direction_bound(std::size_t steps) const;

  policy::PolicyParams params_;
  AgentConfig cfg_;
  PolicyOptimizer optimizer_;
  std::uint64_t episode_ = 0;
};

/// Single-timescale-pair recursion: quantile step on U(tau), then theta += gamma * D.
class QpoAgent final : public Agent {
 public:
  QpoAgent(std::shared_ptr<const policy::PolicyModel> model, AgentConfig config, Rng& init_rng);
  std::string name() const override { return "qpo"; }
  EpisodeReport train_episode(envs::Environment& env, Streams& streams) override;
  void warm_start(envs::Environment& env, Streams& streams) override;
  double tracker_value() const override { return tracker_.q; }
  nlohmann::json tracker_json() const override;
  void restore_tracker(const nlohmann::json& j) override;
  const quantile::QuantileTracker& tracker() const { return tracker_; }
  quantile::QuantileTracker& tracker() { return tracker_; }

 private:
  quantile::QuantileTracker tracker_;
};

/// Off-policy variant with a bank of truncated-horizon quantiles, importance ratios,
/// the clipped quantile surrogate and a baseline B(s0, l).
class QppoAgent final : public Agent {
 public:
  QppoAgent(std::shared_ptr<const policy::PolicyModel> model, std::size_t horizon, AgentConfig config,
            Rng& init_rng);
  std::string name() const override { return "qppo"; }
  EpisodeReport train_episode(envs::Environment& env, Streams& streams) override;
  void warm_start(envs::Environment& env, Streams& streams) override;
  double tracker_value() const override { return bank_.value(bank_.last_horizon()); }
  nlohmann::json tracker_json() const override;
  void restore_tracker(const nlohmann::json& j) override;
  const quantile::QuantileBank& bank() const { return bank_; }
  const policy::BaselineNet& baseline() const { return baseline_; }

  /// Horizons used in the last episode, in the order they were processed.
  const std::vector<std::size_t>& last_plan() const { return plan_; }

 private:
  std::pair<std::size_t, double> update(Streams& streams);

  std::size_t horizon_;
  quantile::QuantileBank bank_;
  policy::BaselineNet baseline_;
  std::vector<std::size_t> plan_;
  std::vector<Trajectory> buffer_;
  std::vector<std::vector<double>> behavior_;
};

/// Mean criterion, likelihood-ratio gradient with discounted reward-to-go.
class ReinforceAgent final : public Agent {
 public:
  using Agent::Agent;
  std::string name() const override { return "reinforce"; }
  EpisodeReport train_episode(envs::Environment& env, Streams& streams) override;
};

/// Mean criterion, clipped ratio surrogate with advantage = reward-to-go minus a learned
/// value of (state, time); updates every `update_interval` collected steps.
class PpoAgent final : public Agent {
 public:
  PpoAgent(std::shared_ptr<const policy::PolicyModel> model, std::size_t horizon, AgentConfig config,
           Rng& init_rng);
  std::string name() const override { return "ppo"; }
  EpisodeReport train_episode(envs::Environment& env, Streams& streams) override;

 private:
  std::size_t update(Streams& streams);

  std::size_t horizon_;
  policy::BaselineNet value_;
  std::vector<Trajectory> buffer_;
  std::size_t buffered_steps_ = 0;
  double value_scale_ = 0.0;
};

/// Zeroth-order ascent on the empirical alpha-quantile: batches of episodes at
/// theta +/- c_k delta, one parameter step per 2 * batch episodes.
class SpsaAgent final : public Agent {
 public:
  SpsaAgent(std::shared_ptr<const policy::PolicyModel> model, AgentConfig config, Rng& init_rng);
  std::string name() const override { return "spsa"; }
  EpisodeReport train_episode(envs::Environment& env, Streams& streams) override;
  const SpsaGains& gains() const { return gains_; }
  std::uint64_t iterations() const { return iteration_; }

 private:
  SpsaGains gains_;
  std::uint64_t iteration_ = 0;
  std::vector<double> delta_;
  std::vector<double> plus_returns_, minus_returns_;
};

/// Builds an agent by key: qpo, qppo, reinforce, ppo, spsa. Throws ConfigError otherwise.
std::unique_ptr<Agent> make_agent(const std::string& key, std::shared_ptr<const policy::PolicyModel> model,
                                  std::size_t horizon, AgentConfig config, Rng& init_rng);

/// Fisher-Yates permutation of {first, ..., last} drawn from explicit uniforms.
std::vector<std::size_t> shuffled_horizons(std::size_t first, std::size_t last, Rng& rng);

}  // namespace qrl::algos
