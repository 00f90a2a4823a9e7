#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "qrl/envs/inventory.hpp"
#include "qrl/envs/portfolio.hpp"
#include "qrl/envs/zero_mean.hpp"
#include "qrl/errors.hpp"
#include "qrl/harness/harness.hpp"

namespace qrl::harness {

using nlohmann::json;
using quantile::StepSchedule;

namespace {

const std::vector<std::string> kEnvKeys = {"zero_mean_simple", "zero_mean_hard",   "portfolio_perfect",
                                           "portfolio_imperfect", "inventory_single", "inventory_multi"};
const std::vector<std::string> kAlgoKeys = {"qpo", "qppo", "reinforce", "ppo", "spsa"};

bool is_inventory(const std::string& env) { return env.rfind("inventory", 0) == 0; }
bool is_portfolio(const std::string& env) { return env.rfind("portfolio", 0) == 0; }

template <class T>
T field(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

StepSchedule schedule_field(const json& j, const char* key) {
  try {
    return quantile::schedule_from_json(j.at(key));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

std::string optimizer_name(algos::PolicyOptimizer::Kind k) {
  return k == algos::PolicyOptimizer::Kind::sgd ? "sgd" : "adam";
}

std::string rule_name(algos::QuantileRule r) { return r == algos::QuantileRule::sa ? "sa" : "adam"; }

}  // namespace

std::vector<std::string> preset_names() {
  return {"zero_mean_simple", "zero_mean_hard", "portfolio_perfect", "portfolio_imperfect", "inventory_single",
          "inventory_multi"};
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.env = name;
  auto& a = c.agent;
  if (name == "zero_mean_simple") {
    // defaults already match
  } else if (name == "zero_mean_hard") {
    c.network.hidden = {64, 64, 64};
    a.policy_lr = StepSchedule::staircase(5e-4, 0.8, 2500);
    a.quantile_lr = StepSchedule::staircase(1e-3, 0.9, 2500);
    a.baseline_hidden = {64, 64, 64};
  } else if (is_portfolio(name)) {
    c.window = 200;
    c.episodes = 20000;
    c.network.hidden = {64, 64, 64};
    a.alpha = 0.1;
    a.policy_lr = StepSchedule::staircase(2e-5, 0.9, 10000);
    a.quantile_lr = StepSchedule::staircase(0.01, 0.9, 10000);
    a.update_interval = 5000;
    a.truncation_min = 91;
    a.baseline_hidden = {64, 64, 64};
  } else if (name == "inventory_single") {
    c.episodes = 10000;
    c.network.conv = {64};
    c.network.hidden = {};
    a.alpha = 0.1;
    a.policy_lr = StepSchedule::staircase(1e-4, 0.9, 5000);
    a.quantile_lr = StepSchedule::staircase(2.0, 0.9, 5000);
    a.update_interval = 2000;
    a.truncation_min = 46;
    a.baseline_hidden = {64};
  } else if (name == "inventory_multi") {
    c.episodes = 20000;
    c.network.conv = {32, 64};
    c.network.hidden = {};
    a.alpha = 0.1;
    a.policy_lr = StepSchedule::staircase(1e-4, 0.9, 20000);
    a.quantile_lr = StepSchedule::staircase(0.2, 0.9, 20000);
    a.update_interval = 10000;
    a.truncation_min = 91;
    a.baseline_hidden = {64};
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return c;
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
      "schema_version", "preset", "algo", "env", "demand", "horizon", "action_log_std", "alpha", "discount", "optimizer",
      "policy_lr", "quantile_rule", "quantile_lr", "warm_start_episodes", "truncation_min", "clip",
      "baseline_hidden", "baseline_lr", "qppo_batch_episodes", "qppo_epochs", "update_interval", "epochs",
      "minibatch", "spsa_batch", "spsa_lr_multiplier", "network", "episodes", "replications", "seed", "window",
      "eval_episodes", "output_dir", "threads"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config field '" + key + "'");
  }
  if (!j.contains("schema_version")) throw ConfigError("config lacks schema_version");
  const int version = field<int>(j, "schema_version");
  if (version != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  }

  ExperimentConfig c;
  if (j.contains("preset")) {
    c = preset(field<std::string>(j, "preset"));
  } else if (j.contains("env")) {
    const auto env = field<std::string>(j, "env");
    if (std::find(kEnvKeys.begin(), kEnvKeys.end(), env) != kEnvKeys.end()) c = preset(env);
  }
  auto& a = c.agent;
  if (j.contains("algo")) c.algo = field<std::string>(j, "algo");
  if (j.contains("env")) c.env = field<std::string>(j, "env");
  if (j.contains("demand")) c.demand = j.at("demand");
  if (j.contains("horizon")) c.horizon = field<std::size_t>(j, "horizon");
  if (j.contains("action_log_std")) c.action_log_std = field<double>(j, "action_log_std");
  if (j.contains("alpha")) a.alpha = field<double>(j, "alpha");
  if (j.contains("discount")) a.discount = field<double>(j, "discount");
  if (j.contains("optimizer")) {
    const auto o = field<std::string>(j, "optimizer");
    if (o == "sgd") a.optimizer = algos::PolicyOptimizer::Kind::sgd;
    else if (o == "adam") a.optimizer = algos::PolicyOptimizer::Kind::adam;
    else throw ConfigError("optimizer must be 'sgd' or 'adam', got '" + o + "'");
  }
  if (j.contains("policy_lr")) a.policy_lr = schedule_field(j, "policy_lr");
  if (j.contains("quantile_rule")) {
    const auto r = field<std::string>(j, "quantile_rule");
    if (r == "sa") a.quantile_rule = algos::QuantileRule::sa;
    else if (r == "adam") a.quantile_rule = algos::QuantileRule::adam;
    else throw ConfigError("quantile_rule must be 'sa' or 'adam', got '" + r + "'");
  }
  if (j.contains("quantile_lr")) a.quantile_lr = schedule_field(j, "quantile_lr");
  if (j.contains("warm_start_episodes")) a.warm_start_episodes = field<std::size_t>(j, "warm_start_episodes");
  if (j.contains("truncation_min")) a.truncation_min = field<std::size_t>(j, "truncation_min");
  if (j.contains("clip")) a.clip = field<double>(j, "clip");
  if (j.contains("baseline_hidden")) a.baseline_hidden = field<std::vector<std::size_t>>(j, "baseline_hidden");
  if (j.contains("baseline_lr")) a.baseline_lr = field<double>(j, "baseline_lr");
  if (j.contains("qppo_batch_episodes")) a.qppo_batch_episodes = field<std::size_t>(j, "qppo_batch_episodes");
  if (j.contains("qppo_epochs")) a.qppo_epochs = field<std::size_t>(j, "qppo_epochs");
  if (j.contains("update_interval")) a.update_interval = field<std::size_t>(j, "update_interval");
  if (j.contains("epochs")) a.epochs = field<std::size_t>(j, "epochs");
  if (j.contains("minibatch")) a.minibatch = field<std::size_t>(j, "minibatch");
  if (j.contains("spsa_batch")) a.spsa_batch = field<std::size_t>(j, "spsa_batch");
  if (j.contains("spsa_lr_multiplier")) a.spsa_lr_multiplier = field<double>(j, "spsa_lr_multiplier");
  if (j.contains("network")) {
    const json& n = j.at("network");
    if (!n.is_object()) throw ConfigError("config field 'network' must be an object");
    for (const auto& [key, value] : n.items()) {
      if (key != "conv" && key != "kernel" && key != "hidden") throw ConfigError("unknown network field '" + key + "'");
    }
    if (n.contains("conv")) c.network.conv = field<std::vector<std::size_t>>(n, "conv");
    if (n.contains("kernel")) c.network.kernel = field<std::size_t>(n, "kernel");
    if (n.contains("hidden")) c.network.hidden = field<std::vector<std::size_t>>(n, "hidden");
  }
  if (j.contains("episodes")) c.episodes = field<std::size_t>(j, "episodes");
  if (j.contains("replications")) c.replications = field<std::size_t>(j, "replications");
  if (j.contains("seed")) c.seed = field<std::uint64_t>(j, "seed");
  if (j.contains("window")) c.window = field<std::size_t>(j, "window");
  if (j.contains("eval_episodes")) c.eval_episodes = field<std::size_t>(j, "eval_episodes");
  if (j.contains("output_dir")) c.output_dir = field<std::string>(j, "output_dir");
  if (j.contains("threads")) c.threads = field<std::size_t>(j, "threads");
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

json to_json(const ExperimentConfig& c) {
  const auto& a = c.agent;
  json j = {
      {"schema_version", c.schema_version},
      {"algo", c.algo},
      {"env", c.env},
      {"horizon", c.horizon},
      {"action_log_std", c.action_log_std},
      {"alpha", a.alpha},
      {"discount", a.discount},
      {"optimizer", optimizer_name(a.optimizer)},
      {"policy_lr", quantile::to_json(a.policy_lr)},
      {"quantile_rule", rule_name(a.quantile_rule)},
      {"quantile_lr", quantile::to_json(a.quantile_lr)},
      {"warm_start_episodes", a.warm_start_episodes},
      {"truncation_min", a.truncation_min},
      {"clip", a.clip},
      {"baseline_hidden", a.baseline_hidden},
      {"baseline_lr", a.baseline_lr},
      {"qppo_batch_episodes", a.qppo_batch_episodes},
      {"qppo_epochs", a.qppo_epochs},
      {"update_interval", a.update_interval},
      {"epochs", a.epochs},
      {"minibatch", a.minibatch},
      {"spsa_batch", a.spsa_batch},
      {"spsa_lr_multiplier", a.spsa_lr_multiplier},
      {"network", {{"conv", c.network.conv}, {"kernel", c.network.kernel}, {"hidden", c.network.hidden}}},
      {"episodes", c.episodes},
      {"replications", c.replications},
      {"seed", c.seed},
      {"window", c.window},
      {"eval_episodes", c.eval_episodes},
      {"output_dir", c.output_dir},
      {"threads", c.threads},
  };
  if (!c.demand.is_null()) j["demand"] = c.demand;
  return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = to_json(cfg);
  // where the files land and how many threads run them do not change results
  j.erase("output_dir");
  j.erase("threads");
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::unique_ptr<envs::Environment> make_environment(const ExperimentConfig& cfg) {
  const std::size_t T = cfg.horizon;
  if (cfg.env == "zero_mean_simple" || cfg.env == "zero_mean_hard") {
    auto base = cfg.env == "zero_mean_simple" ? envs::ZeroMeanEnv::simple() : envs::ZeroMeanEnv::hard();
    return std::make_unique<envs::ZeroMeanEnv>(base.values(), T ? T : base.horizon());
  }
  if (is_portfolio(cfg.env)) {
    envs::PortfolioConfig pc;
    pc.market = cfg.env == "portfolio_perfect" ? envs::MarketParams::perfectly_hedgeable()
                                                 : envs::MarketParams::imperfectly_hedgeable();
    if (T) pc.horizon = T;
    pc.initial_log_std = cfg.action_log_std;
    return std::make_unique<envs::PortfolioEnv>(pc);
  }
  if (is_inventory(cfg.env)) {
    envs::InventoryConfig ic;
    if (cfg.env == "inventory_multi") {
      ic.chain = envs::SupplyChainParams::multi_echelon();
      ic.horizon = 100;
    }
    if (!cfg.demand.is_null()) {
      try {
        ic.demand = envs::demand_model_from_json(cfg.demand);
      } catch (const json::exception& e) {
        throw ConfigError(std::string("config field 'demand': ") + e.what());
      }
    }
    if (T) ic.horizon = T;
    return std::make_unique<envs::InventoryEnv>(ic);
  }
  throw ConfigError("unknown env '" + cfg.env + "'");
}

std::shared_ptr<const policy::PolicyModel> make_policy_model(const ExperimentConfig& cfg,
                                                             const envs::Environment& env) {
  const policy::ActionSpec spec = env.action_spec();
  const std::size_t steps = env.observation_steps();
  if (env.observation_width() % steps != 0) throw ConfigError("observation width is not a multiple of its history");
  ad::Architecture arch;
  arch.input_dim = env.observation_width() / steps;
  arch.time_steps = steps;
  std::size_t remaining = steps;
  for (std::size_t ch : cfg.network.conv) {
    if (cfg.network.kernel == 0 || cfg.network.kernel > remaining) {
      throw ConfigError("temporal conv kernel " + std::to_string(cfg.network.kernel) + " does not fit a history of " +
                        std::to_string(remaining) + " steps");
    }
    remaining -= cfg.network.kernel - 1;
    arch.trunk.push_back(ad::LayerSpec{.kind = ad::LayerKind::temporal_conv, .out = ch, .act = ad::Activation::tanh,
                                       .kernel_size = cfg.network.kernel});
  }
  for (std::size_t w : cfg.network.hidden) arch.trunk.push_back(ad::LayerSpec{.out = w, .act = ad::Activation::tanh});
  arch.heads.push_back(ad::LayerSpec{.out = spec.head_width(), .act = ad::Activation::identity});
  return std::make_shared<policy::PolicyModel>(arch, spec);
}

void validate(const ExperimentConfig& c) {
  const auto& a = c.agent;
  if (c.schema_version != kSchemaVersion) throw ConfigError("unsupported schema_version");
  if (std::find(kAlgoKeys.begin(), kAlgoKeys.end(), c.algo) == kAlgoKeys.end()) {
    throw ConfigError("unknown algo '" + c.algo + "' (expected qpo, qppo, reinforce, ppo or spsa)");
  }
  if (std::find(kEnvKeys.begin(), kEnvKeys.end(), c.env) == kEnvKeys.end()) {
    throw ConfigError("unknown env '" + c.env + "'");
  }
  if (!c.demand.is_null() && !is_inventory(c.env)) throw ConfigError("'demand' applies to inventory envs only");
  if (!(a.alpha > 0.0 && a.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(a.discount > 0.0 && a.discount <= 1.0)) throw ConfigError("discount must lie in (0, 1]");
  if (c.window < 1) throw ConfigError("window must be at least 1");
  if (c.replications < 1) throw ConfigError("replications must be at least 1");
  if (!(a.policy_lr.scale() > 0.0)) throw ConfigError("policy_lr must be positive");
  if (!(a.quantile_lr.scale() > 0.0)) throw ConfigError("quantile_lr must be positive");
  if (!(a.baseline_lr > 0.0)) throw ConfigError("baseline_lr must be positive");
  if (!(a.spsa_lr_multiplier > 0.0)) throw ConfigError("spsa_lr_multiplier must be positive");
  if (c.output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (!std::isfinite(c.action_log_std)) throw ConfigError("action_log_std must be finite");

  auto env = make_environment(c);
  const std::size_t T = env->horizon();
  if (a.truncation_min < 1 || a.truncation_min > T) {
    throw ConfigError("truncation_min must lie in [1, T] = [1, " + std::to_string(T) + "]");
  }
  auto model = make_policy_model(c, *env);
  Rng probe(0);
  algos::make_agent(c.algo, model, T, a, probe);
}

}  // namespace qrl::harness
