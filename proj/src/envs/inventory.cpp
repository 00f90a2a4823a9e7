#include "qrl/envs/inventory.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "qrl/errors.hpp"

namespace qrl::envs {

nlohmann::json to_json(const DemandModel& m) {
  switch (m.kind) {
    case DemandModel::Kind::uniform:
      return {{"kind", "uniform"}, {"max", m.uniform_max}};
    case DemandModel::Kind::merton_jump:
      return {{"kind", "merton_jump"}, {"mu", m.mu},           {"sigma", m.sigma}, {"jump_mean", m.jump_mean},
              {"jump_vol", m.jump_vol}, {"scale", m.scale},     {"jump_rate", m.jump_rate}};
    case DemandModel::Kind::periodic_saw:
      return {{"kind", "periodic_saw"}, {"noise_max", m.noise_max}, {"phase", m.phase}, {"period", m.period}};
  }
  return {};
}

DemandModel demand_model_from_json(const nlohmann::json& j) {
  DemandModel m;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "uniform") {
    m.kind = DemandModel::Kind::uniform;
    m.uniform_max = j.value("max", m.uniform_max);
  } else if (kind == "merton_jump") {
    m.kind = DemandModel::Kind::merton_jump;
    m.mu = j.value("mu", m.mu);
    m.sigma = j.value("sigma", m.sigma);
    m.jump_mean = j.value("jump_mean", m.jump_mean);
    m.jump_vol = j.value("jump_vol", m.jump_vol);
    m.scale = j.value("scale", m.scale);
    m.jump_rate = j.value("jump_rate", m.jump_rate);
  } else if (kind == "periodic_saw") {
    m.kind = DemandModel::Kind::periodic_saw;
    m.noise_max = j.value("noise_max", m.noise_max);
    m.phase = j.value("phase", m.phase);
    m.period = j.value("period", m.period);
  } else {
    throw ConfigError("unknown demand model '" + kind + "'");
  }
  if (m.uniform_max < 0 || m.noise_max < 0 || m.period <= 0 || !(m.scale >= 0.0) || !(m.jump_rate >= 0.0)) {
    throw ConfigError("demand model parameters out of range");
  }
  return m;
}

namespace {

int uniform_int(Rng& rng, int max_inclusive) {
  return std::min(max_inclusive, static_cast<int>(uniform01(rng) * (max_inclusive + 1)));
}

}  // namespace

int DemandProcess::next(std::size_t t, Rng& rng) {
  switch (model_.kind) {
    case DemandModel::Kind::uniform:
      return uniform_int(rng, model_.uniform_max);
    case DemandModel::Kind::merton_jump: {
      const double z = standard_normal(rng);
      const double z_jump = standard_normal(rng);
      const double jumps = static_cast<double>(std::poisson_distribution<int>(model_.jump_rate)(rng));
      jump_level_ += (model_.mu - 0.5 * model_.sigma * model_.sigma) + model_.sigma * z + model_.jump_mean * jumps +
                     model_.jump_vol * std::sqrt(jumps) * z_jump;
      return static_cast<int>(std::floor(model_.scale * std::exp(jump_level_)));
    }
    case DemandModel::Kind::periodic_saw:
      return uniform_int(rng, model_.noise_max) +
             static_cast<int>((t + static_cast<std::size_t>(model_.phase)) % static_cast<std::size_t>(model_.period));
  }
  return 0;
}

std::size_t SupplyChainParams::max_lead_time() const {
  return lead_time.empty() ? 0 : *std::max_element(lead_time.begin(), lead_time.end());
}

SupplyChainParams SupplyChainParams::single_echelon() {
  return {{3}, {2.0, 1.5}, {0.15}, {0.10}, {10.0}};
}

SupplyChainParams SupplyChainParams::multi_echelon() {
  return {{2, 3, 5}, {2.0, 1.5, 1.0, 0.5}, {0.2, 0.15, 0.1}, {0.125, 0.1, 0.075}, {10.0, 10.0, 10.0}};
}

namespace {

void validate(const SupplyChainParams& c) {
  const std::size_t n = c.echelons();
  if (n == 0) throw ConfigError("supply chain needs at least one echelon");
  if (c.price.size() != n + 1 || c.holding.size() != n || c.lost_penalty.size() != n ||
      c.initial_inventory.size() != n) {
    throw ConfigError("supply chain parameter lists have inconsistent lengths");
  }
  for (std::size_t l : c.lead_time) {
    if (l == 0) throw ConfigError("lead times must be at least one period");
  }
  for (double x : c.initial_inventory) {
    if (x < 0.0) throw ConfigError("initial inventory must be nonnegative");
  }
}

}  // namespace

SupplyChainState initial_supply_state(const SupplyChainParams& params) {
  validate(params);
  SupplyChainState s;
  s.inventory = params.initial_inventory;
  for (std::size_t l : params.lead_time) s.in_transit.emplace_back(l, 0.0);
  return s;
}

PeriodOutcome inventory_step(const SupplyChainParams& params, SupplyChainState& state,
                             const std::vector<double>& orders, double demand) {
  const std::size_t n = params.echelons();
  if (orders.size() != n) throw UsageError("one order per echelon required");
  if (demand < 0.0) throw UsageError("demand must be nonnegative");
  for (double q : orders) {
    if (q < 0.0) throw UsageError("orders must be nonnegative");
  }
  PeriodOutcome out;
  out.shipped.assign(n + 1, 0.0);
  out.lost.assign(n, 0.0);
  out.inventory.assign(n, 0.0);
  out.profit.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double incoming_order = i == 0 ? demand : orders[i - 1];
    const double arrivals = state.in_transit[i].front();
    state.in_transit[i].pop_front();
    const double available = state.inventory[i] + arrivals;
    out.shipped[i] = std::min(incoming_order, available);
    out.lost[i] = incoming_order - out.shipped[i];
    out.inventory[i] = std::max(available - out.shipped[i], 0.0);
  }
  out.shipped[n] = orders[n - 1];
  for (std::size_t i = 0; i < n; ++i) {
    state.in_transit[i].push_back(out.shipped[i + 1]);
    state.inventory[i] = out.inventory[i];
    out.profit[i] = params.price[i] * out.shipped[i] - params.price[i + 1] * out.shipped[i + 1] -
                    params.holding[i] * out.inventory[i] - params.lost_penalty[i] * out.lost[i];
    out.reward += out.profit[i];
  }
  return out;
}

InventoryEnv::InventoryEnv(InventoryConfig config)
    : cfg_(std::move(config)),
      history_(cfg_.history == 0 ? cfg_.chain.max_lead_time() : cfg_.history),
      demand_(cfg_.demand),
      state_(initial_supply_state(cfg_.chain)) {
  if (cfg_.horizon == 0 || cfg_.max_order == 0) throw ConfigError("horizon and max order must be positive");
  if (history_ == 0) throw ConfigError("observation history must be positive");
}

policy::ActionSpec InventoryEnv::action_spec() const {
  const std::size_t n = cfg_.chain.echelons();
  if (n == 1) return policy::ActionSpec::categorical(cfg_.max_order + 1);
  return policy::ActionSpec::multi_discrete(cfg_.max_order + 1, n);
}

std::vector<double> InventoryEnv::reset() {
  state_ = initial_supply_state(cfg_.chain);
  demand_.reset();
  records_.clear();
  const std::size_t n = cfg_.chain.echelons();
  for (std::size_t k = 0; k < history_; ++k) {
    std::vector<double> rec(channels(), 0.0);
    for (std::size_t i = 0; i < n; ++i) rec[i] = state_.inventory[i];
    records_.push_back(std::move(rec));
  }
  last_ = PeriodOutcome{};
  t_ = 0;
  return observe();
}

StepResult InventoryEnv::step(const policy::Action& action) {
  const std::size_t n = cfg_.chain.echelons();
  if (action.discrete.size() != n) throw UsageError("inventory action needs one order per echelon");
  if (t_ >= cfg_.horizon) throw UsageError("step called after the episode ended");
  std::vector<double> orders(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (action.discrete[i] > cfg_.max_order) throw UsageError("order above the maximum");
    orders[i] = static_cast<double>(action.discrete[i]);
  }
  ++t_;
  const double demand = static_cast<double>(demand_.next(t_, rng_));
  last_ = inventory_step(cfg_.chain, state_, orders, demand);
  std::vector<double> rec(channels());
  for (std::size_t i = 0; i < n; ++i) {
    rec[i] = last_.inventory[i];
    rec[n + i] = last_.lost[i];
    rec[2 * n + i] = last_.shipped[i];
    rec[3 * n + i] = orders[i];
  }
  records_.push_back(std::move(rec));
  records_.pop_front();
  StepResult out;
  out.reward = last_.reward;
  out.done = t_ == cfg_.horizon;
  out.observation = observe();
  return out;
}

std::vector<double> InventoryEnv::observe() const {
  std::vector<double> obs;
  obs.reserve(observation_width());
  const double scale = 1.0 / static_cast<double>(cfg_.max_order);
  for (const auto& rec : records_) {
    for (double x : rec) obs.push_back(x * scale);
  }
  return obs;
}

}  // namespace qrl::envs
