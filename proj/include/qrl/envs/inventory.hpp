#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <vector>

#include <json.hpp>

#include "qrl/envs/environment.hpp"

namespace qrl::envs {

struct DemandModel {
  enum class Kind { uniform, merton_jump, periodic_saw };
  Kind kind = Kind::uniform;
  // uniform: integers 0..uniform_max
  int uniform_max = 20;
  // merton_jump: floor(scale * exp(J_t)), J_t = J_{t-1} + (mu - sigma^2/2) + sigma Z + a N + b sqrt(N) Z'
  double mu = 5e-5, sigma = 0.01, jump_mean = 0.0, jump_vol = 0.01, scale = 10.0, jump_rate = 15.0;
  // periodic_saw: x_t + ((t + phase) mod period), x_t uniform on 0..noise_max
  int noise_max = 7, phase = 6, period = 15;
};

nlohmann::json to_json(const DemandModel& m);
DemandModel demand_model_from_json(const nlohmann::json& j);

/// Stateful demand generator; only the Merton model carries state (J_t).
class DemandProcess {
 public:
  explicit DemandProcess(DemandModel model) : model_(model) {}
  void reset() { jump_level_ = 0.0; }
  /// Demand for period t >= 1.
  int next(std::size_t t, Rng& rng);
  const DemandModel& model() const { return model_; }

 private:
  DemandModel model_;
  double jump_level_ = 0.0;
};

struct SupplyChainParams {
  std::vector<std::size_t> lead_time;  // L^i, i = 1..N
  std::vector<double> price;           // p^i, i = 1..N+1
  std::vector<double> holding;         // h^i
  std::vector<double> lost_penalty;    // l^i
  std::vector<double> initial_inventory;

  std::size_t echelons() const { return lead_time.size(); }
  std::size_t max_lead_time() const;
  static SupplyChainParams single_echelon();
  static SupplyChainParams multi_echelon();
};

/// Physical state of the chain: on-hand stock and the shipments still travelling.
struct SupplyChainState {
  std::vector<double> inventory;
  /// in_transit[i][d]: units arriving at echelon i in d + 1 periods.
  std::vector<std::deque<double>> in_transit;
};

struct PeriodOutcome {
  std::vector<double> shipped;   // S^i, i = 1..N+1 (the last is the manufacturer)
  std::vector<double> lost;      // U^i
  std::vector<double> inventory; // I^i after the period
  std::vector<double> profit;    // P^i
  double reward = 0.0;
};

SupplyChainState initial_supply_state(const SupplyChainParams& params);

/// One period with lost sales. orders[i-1] = q^i, demand = q^0.
PeriodOutcome inventory_step(const SupplyChainParams& params, SupplyChainState& state,
                             const std::vector<double>& orders, double demand);

struct InventoryConfig {
  SupplyChainParams chain = SupplyChainParams::single_echelon();
  DemandModel demand;
  std::size_t horizon = 50;
  std::size_t max_order = 20;
  /// Length of the observed history; 0 means max lead time.
  std::size_t history = 0;
};

/// Orders are a categorical choice in 0..max_order per echelon. The observation is the last
/// `history` periods of (inventory, lost sales, shipped, ordered) per echelon, oldest first,
/// divided by max_order.
class InventoryEnv final : public Environment {
 public:
  explicit InventoryEnv(InventoryConfig config);

  std::string name() const override { return "inventory"; }
  std::size_t horizon() const override { return cfg_.horizon; }
  policy::ActionSpec action_spec() const override;
  std::size_t observation_width() const override { return history_ * channels(); }
  std::size_t observation_steps() const override { return history_; }
  std::size_t channels() const { return 4 * cfg_.chain.echelons(); }

  std::vector<double> reset() override;
  StepResult step(const policy::Action& action) override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<InventoryEnv>(*this); }

  const InventoryConfig& config() const { return cfg_; }
  const SupplyChainState& chain_state() const { return state_; }
  const PeriodOutcome& last_outcome() const { return last_; }

 private:
  std::vector<double> observe() const;

  InventoryConfig cfg_;
  std::size_t history_;
  DemandProcess demand_;
  SupplyChainState state_;
  std::deque<std::vector<double>> records_;
  PeriodOutcome last_;
  std::size_t t_ = 0;
};

}  // namespace qrl::envs
