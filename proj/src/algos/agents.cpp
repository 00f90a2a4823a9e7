#include "qrl/algos/agents.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "qrl/autodiff/graph.hpp"
#include "qrl/errors.hpp"
#include "qrl/order_statistics.hpp"

namespace qrl::algos {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void validate(const AgentConfig& c) {
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(c.discount > 0.0 && c.discount <= 1.0)) throw ConfigError("discount must lie in (0, 1]");
  if (!(c.clip > 0.0 && c.clip < 1.0)) throw ConfigError("clip parameter must lie in (0, 1)");
  if (c.update_interval == 0 || c.epochs == 0 || c.minibatch == 0) {
    throw ConfigError("update interval, epochs and minibatch must be positive");
  }
  if (c.spsa_batch == 0) throw ConfigError("SPSA batch must be positive");
  if (c.qppo_batch_episodes == 0 || c.qppo_epochs == 0) throw ConfigError("QPPO batch and epochs must be positive");
}

/// Per-step log pi(a_t|s_t) over the whole trajectory as an [T x 1] node.
ad::Var trajectory_log_probs(ad::Graph& g, ad::Var theta, const policy::PolicyModel& model, const Trajectory& traj) {
  return model.log_probs(g, theta, traj.observation_rows(0, traj.length()), traj.actions);
}

std::vector<double> behavior_prefix_sums(const policy::PolicyParams& params, const Trajectory& traj) {
  ad::Graph g;
  ad::Var theta = g.constant(ad::Tensor(1, params.theta.size(), params.theta));
  const auto& lp = g.value(trajectory_log_probs(g, theta, *params.model, traj));
  std::vector<double> prefix(traj.length() + 1, 0.0);
  for (std::size_t t = 0; t < traj.length(); ++t) prefix[t + 1] = prefix[t] + lp[t];
  return prefix;
}

struct SurrogateGradient {
  std::vector<double> ratios;  // one per episode, at the current iterate
  std::vector<double> grad;    // d mean surrogate / d theta
};

/// Gradient of the batch mean of min(rho A, clip(rho) A), rho being each episode's prefix-l ratio
/// against its behavior log-density sum.
SurrogateGradient quantile_surrogate(const policy::PolicyParams& params, std::span<const Trajectory* const> batch,
                                     std::size_t l, std::span<const double> behavior_sums,
                                     std::span<const double> advantages, double eps) {
  const std::size_t width = params.model->observation_width();
  std::size_t total_rows = 0;
  for (const Trajectory* t : batch) total_rows += t->length();
  ad::Tensor obs(total_rows, width);
  std::vector<policy::Action> actions;
  actions.reserve(total_rows);
  std::vector<std::size_t> offsets;
  std::size_t row = 0;
  for (const Trajectory* t : batch) {
    offsets.push_back(row);
    std::copy(t->observations.begin(), t->observations.end(),
              obs.data().begin() + static_cast<std::ptrdiff_t>(row * width));
    actions.insert(actions.end(), t->actions.begin(), t->actions.end());
    row += t->length();
  }
  ad::Graph g;
  ad::Var theta = g.parameter(params.theta, 1, params.theta.size());
  ad::Var lp = params.model->log_probs(g, theta, obs, actions);
  std::vector<ad::Var> rhos;
  ad::Var obj{};
  for (std::size_t e = 0; e < batch.size(); ++e) {
    ad::Var rho = g.exp(g.add_scalar(g.sum(g.rows(lp, offsets[e], offsets[e] + l)), -behavior_sums[e]));
    const double a = advantages[e];
    ad::Var term = g.minimum(g.scale(rho, a), g.scale(g.clip(rho, 1.0 - eps, 1.0 + eps), a));
    obj = e == 0 ? term : g.add(obj, term);
    rhos.push_back(rho);
  }
  obj = g.scale(obj, 1.0 / static_cast<double>(batch.size()));
  SurrogateGradient out;
  for (ad::Var r : rhos) out.ratios.push_back(g.value(r).item());
  out.grad = g.backward(obj);
  return out;
}

}  // namespace

std::vector<std::size_t> shuffled_horizons(std::size_t first, std::size_t last, Rng& rng) {
  std::vector<std::size_t> h(last - first + 1);
  std::iota(h.begin(), h.end(), first);
  for (std::size_t i = h.size(); i-- > 1;) {
    const auto j = std::min(i, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i + 1)));
    std::swap(h[i], h[j]);
  }
  return h;
}

Agent::Agent(std::shared_ptr<const policy::PolicyModel> model, AgentConfig config, Rng& init_rng)
    : params_(policy::PolicyParams::create(std::move(model), init_rng)),
      cfg_(std::move(config)),
      optimizer_(cfg_.optimizer, cfg_.policy_lr, params_.theta.size()) {
  validate(cfg_);
  policy::project_in_place(params_.theta, params_.model->box_bound());
}

void Agent::warm_start(envs::Environment&, Streams&) {}

double Agent::tracker_value() const { return kNaN; }

double Agent::direction_bound(std::size_t steps) const {
  return static_cast<double>(steps) * params_.model->score_bound();
}

// ---------------------------------------------------------------- QPO

QpoAgent::QpoAgent(std::shared_ptr<const policy::PolicyModel> model, AgentConfig config, Rng& init_rng)
    : Agent(std::move(model), std::move(config), init_rng), tracker_(0.0, cfg_.alpha, cfg_.quantile_lr) {}

void QpoAgent::warm_start(envs::Environment& env, Streams& streams) {
  if (cfg_.warm_start_episodes == 0) return;
  std::vector<double> returns;
  for (std::size_t n = 0; n < cfg_.warm_start_episodes; ++n) {
    returns.push_back(rollout(env, params_, streams.policy).discounted_return(cfg_.discount));
  }
  tracker_.q = quantile::warm_start(returns, cfg_.alpha);
}

EpisodeReport QpoAgent::train_episode(envs::Environment& env, Streams& streams) {
  ++episode_;
  const Trajectory traj = rollout(env, params_, streams.policy);
  const double u = traj.discounted_return(cfg_.discount);
  // The direction uses q_k, before the quantile step.
  const auto d = descent_direction(traj, params_, tracker_.q, cfg_.discount);
  if (cfg_.quantile_rule == QuantileRule::sa) {
    quantile::sa_step(tracker_, u);
  } else {
    quantile::adam_quantile_step(tracker_, u);
  }
  EpisodeReport rep;
  rep.direction_norm = l2_norm(d);
  // A zero direction still advances Adam's moments, as an autodiff step on a zero loss would.
  optimizer_.ascend(params_.theta, d, episode_, params_.model->box_bound());
  rep.episode_return = u;
  rep.accuracy = traj.accuracy();
  rep.tracker = tracker_.q;
  rep.updates = 1;
  return rep;
}

nlohmann::json QpoAgent::tracker_json() const {
  return {{"q", tracker_.q}, {"alpha", tracker_.alpha}, {"steps", tracker_.step_count}};
}

void QpoAgent::restore_tracker(const nlohmann::json& j) {
  tracker_.q = j.at("q").get<double>();
  tracker_.step_count = j.at("steps").get<std::uint64_t>();
}

// ---------------------------------------------------------------- QPPO

QppoAgent::QppoAgent(std::shared_ptr<const policy::PolicyModel> model, std::size_t horizon, AgentConfig config,
                     Rng& init_rng)
    : Agent(std::move(model), std::move(config), init_rng),
      horizon_(horizon),
      bank_(cfg_.truncation_min, horizon, cfg_.alpha, cfg_.quantile_lr),
      baseline_(params_.model->observation_width(), cfg_.baseline_hidden, horizon,
                ad::AdamConfig{.learning_rate = cfg_.baseline_lr}, init_rng) {
  if (cfg_.truncation_min == 0 || cfg_.truncation_min > horizon) {
    throw ConfigError("truncation range needs 1 <= T0 <= T");
  }
}

void QppoAgent::warm_start(envs::Environment& env, Streams& streams) {
  if (cfg_.warm_start_episodes == 0) return;
  std::vector<std::vector<double>> returns(bank_.size());
  for (std::size_t n = 0; n < cfg_.warm_start_episodes; ++n) {
    const Trajectory traj = rollout(env, params_, streams.policy);
    for (std::size_t l = bank_.first_horizon(); l <= bank_.last_horizon(); ++l) {
      returns[l - bank_.first_horizon()].push_back(traj.prefix_return(l, cfg_.discount));
    }
  }
  std::vector<double> init(bank_.size());
  for (std::size_t i = 0; i < init.size(); ++i) init[i] = quantile::warm_start(returns[i], cfg_.alpha);
  bank_.set_all(init);
}

EpisodeReport QppoAgent::train_episode(envs::Environment& env, Streams& streams) {
  ++episode_;
  Trajectory traj = rollout(env, params_, streams.policy);
  if (traj.length() != horizon_) throw TrainingError("episode length differs from the configured horizon");
  EpisodeReport rep;
  rep.episode_return = traj.discounted_return(cfg_.discount);
  rep.accuracy = traj.accuracy();
  behavior_.push_back(behavior_prefix_sums(params_, traj));
  buffer_.push_back(std::move(traj));
  if (buffer_.size() >= cfg_.qppo_batch_episodes) {
    const auto [updates, norm] = update(streams);
    rep.updates = updates;
    rep.direction_norm = norm;
  }
  rep.tracker = tracker_value();
  return rep;
}

std::pair<std::size_t, double> QppoAgent::update(Streams& streams) {
  const double box = params_.model->box_bound();
  std::size_t updates = 0;
  double largest = 0.0;
  std::vector<const Trajectory*> batch;
  for (const auto& t : buffer_) batch.push_back(&t);
  for (std::size_t epoch = 0; epoch < cfg_.qppo_epochs; ++epoch) {
    plan_ = shuffled_horizons(bank_.first_horizon(), bank_.last_horizon(), streams.shuffle);
    for (std::size_t l : plan_) {
      std::vector<double> behavior, advantage, returns;
      std::vector<policy::BaselineSample> fit;
      for (std::size_t e = 0; e < buffer_.size(); ++e) {
        const auto s0 = buffer_[e].state(0);
        const double u = buffer_[e].prefix_return(l, cfg_.discount);
        const double below = u <= bank_.value(l) ? 1.0 : 0.0;
        behavior.push_back(behavior_[e][l]);
        advantage.push_back(-below - policy::baseline_eval(baseline_, s0, l));
        returns.push_back(u);
        fit.push_back({{s0.begin(), s0.end()}, l, -below});
      }
      auto step = quantile_surrogate(params_, batch, l, behavior, advantage, cfg_.clip);
      // Quantile steps use the ratio at the current inner iterate; each episode feeds the bank once.
      if (epoch == 0) {
        for (std::size_t e = 0; e < returns.size(); ++e) {
          if (cfg_.quantile_rule == QuantileRule::sa) {
            bank_.sa_step_weighted(l, returns[e], step.ratios[e]);
          } else {
            bank_.adam_step_weighted(l, returns[e], step.ratios[e]);
          }
        }
      }
      clip_norm(step.grad, direction_bound(l));
      largest = std::max(largest, l2_norm(step.grad));
      optimizer_.ascend(params_.theta, step.grad, episode_, box);
      policy::baseline_fit(baseline_, fit);
      ++updates;
    }
  }
  buffer_.clear();
  behavior_.clear();
  return {updates, largest};
}

nlohmann::json QppoAgent::tracker_json() const {
  nlohmann::json steps = nlohmann::json::array();
  for (std::size_t l = bank_.first_horizon(); l <= bank_.last_horizon(); ++l) steps.push_back(bank_.steps(l));
  return {{"first_horizon", bank_.first_horizon()},
          {"q", bank_.values()},
          {"alpha", bank_.alpha()},
          {"steps", steps},
          {"skipped_updates", bank_.skipped_updates()}};
}

void QppoAgent::restore_tracker(const nlohmann::json& j) {
  bank_.set_all(j.at("q").get<std::vector<double>>());
}

// ---------------------------------------------------------------- REINFORCE

EpisodeReport ReinforceAgent::train_episode(envs::Environment& env, Streams& streams) {
  ++episode_;
  const Trajectory traj = rollout(env, params_, streams.policy);
  const auto g = reward_to_go(traj.rewards, cfg_.discount);
  std::vector<double> dir(params_.theta.size(), 0.0);
  bool any = false;
  for (std::size_t t = 0; t < traj.length(); ++t) {
    if (g[t] == 0.0) continue;
    any = true;
    const auto s = policy::score(params_, traj.state(t), traj.actions[t]);
    for (std::size_t i = 0; i < dir.size(); ++i) dir[i] += g[t] * s[i];
  }
  EpisodeReport rep;
  if (any) {
    optimizer_.ascend(params_.theta, dir, episode_, params_.model->box_bound());
    rep.updates = 1;
  }
  rep.episode_return = traj.discounted_return(cfg_.discount);
  rep.accuracy = traj.accuracy();
  rep.tracker = kNaN;
  return rep;
}

// ---------------------------------------------------------------- PPO

PpoAgent::PpoAgent(std::shared_ptr<const policy::PolicyModel> model, std::size_t horizon, AgentConfig config,
                   Rng& init_rng)
    : Agent(std::move(model), std::move(config), init_rng),
      horizon_(horizon),
      value_(params_.model->observation_width(), cfg_.baseline_hidden, horizon,
             ad::AdamConfig{.learning_rate = cfg_.baseline_lr}, init_rng) {}

EpisodeReport PpoAgent::train_episode(envs::Environment& env, Streams& streams) {
  ++episode_;
  Trajectory traj = rollout(env, params_, streams.policy);
  EpisodeReport rep;
  rep.episode_return = traj.discounted_return(cfg_.discount);
  rep.accuracy = traj.accuracy();
  rep.tracker = kNaN;
  buffered_steps_ += traj.length();
  buffer_.push_back(std::move(traj));
  if (buffered_steps_ >= cfg_.update_interval) rep.updates = update(streams);
  return rep;
}

std::size_t PpoAgent::update(Streams& streams) {
  struct Row {
    std::size_t episode, t;
    double ret, advantage, old_log_density;
  };
  std::vector<Row> rows;
  rows.reserve(buffered_steps_);
  for (std::size_t e = 0; e < buffer_.size(); ++e) {
    const auto g = reward_to_go(buffer_[e].rewards, cfg_.discount);
    for (std::size_t t = 0; t < buffer_[e].length(); ++t) rows.push_back({e, t, g[t], 0.0, buffer_[e].log_density[t]});
  }
  if (value_scale_ == 0.0) {
    std::vector<double> rets;
    for (const auto& r : rows) rets.push_back(r.ret);
    value_scale_ = std::max(1e-8, stddev_of(rets));
  }
  for (auto& r : rows) {
    r.advantage = r.ret - value_scale_ * policy::baseline_eval(value_, buffer_[r.episode].state(r.t), r.t);
  }
  {
    std::vector<double> adv;
    for (const auto& r : rows) adv.push_back(r.advantage);
    const double m = mean_of(adv), s = std::max(stddev_of(adv), 1e-8);
    for (auto& r : rows) r.advantage = (r.advantage - m) / s;
  }

  const auto& model = *params_.model;
  const std::size_t width = model.observation_width();
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t steps = 0;
  for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
    for (std::size_t i = order.size(); i-- > 1;) {
      const auto j = std::min(i, static_cast<std::size_t>(uniform01(streams.shuffle) * static_cast<double>(i + 1)));
      std::swap(order[i], order[j]);
    }
    for (std::size_t begin = 0; begin < order.size(); begin += cfg_.minibatch) {
      const std::size_t end = std::min(order.size(), begin + cfg_.minibatch);
      const std::size_t n = end - begin;
      ad::Tensor obs(n, width);
      ad::Tensor old_lp(n, 1), adv(n, 1);
      std::vector<policy::Action> actions;
      std::vector<policy::BaselineSample> value_batch;
      actions.reserve(n);
      for (std::size_t k = 0; k < n; ++k) {
        const Row& r = rows[order[begin + k]];
        const auto s = buffer_[r.episode].state(r.t);
        std::copy(s.begin(), s.end(), obs.data().begin() + static_cast<std::ptrdiff_t>(k * width));
        old_lp[k] = r.old_log_density;
        adv[k] = r.advantage;
        actions.push_back(buffer_[r.episode].actions[r.t]);
        value_batch.push_back({{s.begin(), s.end()}, r.t, r.ret / value_scale_});
      }
      ad::Graph g;
      ad::Var theta = g.parameter(params_.theta, 1, params_.theta.size());
      ad::Var lp = model.log_probs(g, theta, obs, actions);
      ad::Var ratio = g.exp(g.sub(lp, g.constant(std::move(old_lp))));
      ad::Var a = g.constant(std::move(adv));
      ad::Var obj = g.mean(g.minimum(g.mul(ratio, a), g.mul(g.clip(ratio, 1.0 - cfg_.clip, 1.0 + cfg_.clip), a)));
      auto grad = g.backward(obj);
      clip_norm(grad, direction_bound(horizon_));
      optimizer_.ascend(params_.theta, grad, episode_, model.box_bound());
      policy::baseline_fit(value_, value_batch);
      ++steps;
    }
  }
  buffer_.clear();
  buffered_steps_ = 0;
  return steps;
}

// ---------------------------------------------------------------- SPSA

SpsaAgent::SpsaAgent(std::shared_ptr<const policy::PolicyModel> model, AgentConfig config, Rng& init_rng)
    : Agent(std::move(model), std::move(config), init_rng),
      gains_(SpsaGains::from_learning_rate(cfg_.policy_lr.at(1) * cfg_.spsa_lr_multiplier)) {}

EpisodeReport SpsaAgent::train_episode(envs::Environment& env, Streams& streams) {
  ++episode_;
  if (delta_.empty()) delta_ = rademacher(params_.theta.size(), streams.shuffle);
  const double c = gains_.c_k(iteration_);
  const bool plus = plus_returns_.size() < cfg_.spsa_batch;
  policy::PolicyParams probe = params_;
  for (std::size_t i = 0; i < probe.theta.size(); ++i) probe.theta[i] += (plus ? c : -c) * delta_[i];
  const Trajectory traj = rollout(env, probe, streams.policy);
  const double u = traj.discounted_return(cfg_.discount);
  (plus ? plus_returns_ : minus_returns_).push_back(u);

  EpisodeReport rep;
  rep.episode_return = u;
  rep.accuracy = traj.accuracy();
  rep.tracker = kNaN;
  if (minus_returns_.size() == cfg_.spsa_batch) {
    const double q_plus = empirical_quantile(plus_returns_, cfg_.alpha);
    const double q_minus = empirical_quantile(minus_returns_, cfg_.alpha);
    const auto g = spsa_gradient(q_plus, q_minus, c, delta_);
    // The learning-rate schedule scales the gain sequence as it decays.
    const double decay = cfg_.policy_lr.at(episode_) / cfg_.policy_lr.at(1);
    const double a = gains_.a_k(iteration_) * decay;
    for (std::size_t i = 0; i < g.size(); ++i) params_.theta[i] += a * g[i];
    policy::project_in_place(params_.theta, params_.model->box_bound());
    ++iteration_;
    delta_.clear();
    plus_returns_.clear();
    minus_returns_.clear();
    rep.updates = 1;
  }
  return rep;
}

// ---------------------------------------------------------------- factory

std::unique_ptr<Agent> make_agent(const std::string& key, std::shared_ptr<const policy::PolicyModel> model,
                                  std::size_t horizon, AgentConfig config, Rng& init_rng) {
  if (key == "qpo") return std::make_unique<QpoAgent>(std::move(model), std::move(config), init_rng);
  if (key == "qppo") return std::make_unique<QppoAgent>(std::move(model), horizon, std::move(config), init_rng);
  if (key == "reinforce") return std::make_unique<ReinforceAgent>(std::move(model), std::move(config), init_rng);
  if (key == "ppo") return std::make_unique<PpoAgent>(std::move(model), horizon, std::move(config), init_rng);
  if (key == "spsa") return std::make_unique<SpsaAgent>(std::move(model), std::move(config), init_rng);
  throw ConfigError("unknown algorithm '" + key + "' (expected qpo, qppo, reinforce, ppo or spsa)");
}

}  // namespace qrl::algos
