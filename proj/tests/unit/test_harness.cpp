#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "qrl/errors.hpp"
#include "qrl/harness/harness.hpp"
#include "qrl/normal.hpp"
#include "qrl/order_statistics.hpp"

using namespace qrl;
using namespace qrl::harness;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("qrl_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

ExperimentConfig small_config(const fs::path& out) {
  ExperimentConfig c = preset("zero_mean_simple");
  c.algo = "qppo";
  c.episodes = 30;
  c.eval_episodes = 20;
  c.window = 10;
  c.agent.warm_start_episodes = 4;
  c.output_dir = out.string();
  c.threads = 1;
  return c;
}

}  // namespace

TEST_CASE("rolling stats use the ceil(alpha n) order statistic") {
  std::vector<double> w{1, 2, 3, 4};
  auto s = rolling_stats(w, 0.25);
  CHECK(s.quantile == 1.0);
  CHECK(s.mean == 2.5);
  std::vector<double> c(7, 3.5);
  s = rolling_stats(c, 0.3);
  CHECK(s.quantile == 3.5);
  CHECK(s.mean == 3.5);
  std::vector<double> two{5, 1};
  CHECK(rolling_stats(two, 0.5).quantile == 1.0);
}

TEST_CASE("kde data and bandwidth hint") {
  const fs::path dir = scratch_dir("kde");
  fs::create_directories(dir);
  std::vector<double> two{0.0, 1.0};
  KdeHint h = emit_kde_data(two, dir / "a.csv");
  CHECK(h.bandwidth > 0.0);
  CHECK_FALSE(h.degenerate);
  auto rows = lines_of(dir / "a.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "return,bandwidth,degenerate");
  CHECK(rows[1].rfind("0,", 0) == 0);
  CHECK(rows[2].rfind("1,", 0) == 0);

  std::vector<double> flat(10, 2.0);
  h = emit_kde_data(flat, dir / "b.csv");
  CHECK(h.degenerate);
  CHECK(h.bandwidth == 0.0);
  CHECK(lines_of(dir / "b.csv")[1] == "2,0,1");

  // stored normal sample: compare with the formula evaluated independently
  Rng rng(2024);
  std::vector<double> xs(500);
  for (double& x : xs) x = 3.0 + 2.0 * standard_normal(rng);
  double m = 0.0;
  for (double x : xs) m += x;
  m /= 500.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  const double expected = 1.06 * std::sqrt(ss / 499.0) * std::pow(500.0, -0.2);
  CHECK(silverman_bandwidth(xs) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(silverman_bandwidth(xs) == doctest::Approx(2.0 * 1.06 * std::pow(500.0, -0.2)).epsilon(0.1));

  std::vector<double> one{1.0};
  CHECK_THROWS_AS(emit_kde_data(one, dir / "c.csv"), UsageError);
}

TEST_CASE("config parsing, presets and rejection") {
  for (const auto& name : preset_names()) {
    ExperimentConfig c = preset(name);
    CHECK_NOTHROW(validate(c));
    const ExperimentConfig back = config_from_json(to_json(c));
    CHECK(config_hash(back) == config_hash(c));
  }
  CHECK_THROWS_AS(preset("atari"), ConfigError);

  json j = {{"schema_version", 1}, {"preset", "zero_mean_simple"}, {"algo", "qpo"}, {"alpha", 0.1}};
  ExperimentConfig c = config_from_json(j);
  CHECK(c.algo == "qpo");
  CHECK(c.agent.alpha == 0.1);
  CHECK(c.network.hidden == std::vector<std::size_t>{8, 8});
  CHECK(c.agent.truncation_min == 16);

  json inv = {{"schema_version", 1}, {"env", "inventory_single"}};
  c = config_from_json(inv);
  CHECK(c.window == 100);
  CHECK(c.agent.truncation_min == 46);
  CHECK(c.network.conv == std::vector<std::size_t>{64});
  CHECK(config_from_json({{"schema_version", 1}, {"env", "portfolio_perfect"}}).window == 200);

  auto bad = [&](json patch) {
    json k = j;
    k.merge_patch(patch);
    return k;
  };
  CHECK_THROWS_AS(config_from_json(bad({{"alpha", 1.0}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad({{"alpha", 0.0}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad({{"truncation_min", 21}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad({{"truncation_min", 0}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad({{"window", 0}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad({{"algo", "dqn"}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad({{"env", "cartpole"}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad({{"policy_lr", {{"form", "staircase"}, {"initial", -1e-3}, {"factor", 0.8}, {"interval", 10}}}})),
                  ConfigError);
  CHECK_THROWS_AS(config_from_json(bad({{"baseline_lr", 0.0}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad({{"discount", 1.5}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad({{"episodes", "many"}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad({{"colour", "blue"}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad({{"schema_version", 2}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad({{"demand", {{"kind", "uniform"}}}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::array()), ConfigError);
  json no_version = j;
  no_version.erase("schema_version");
  CHECK_THROWS_AS(config_from_json(no_version), ConfigError);

  // the hash ignores where output goes
  ExperimentConfig a = preset("zero_mean_simple"), b = a;
  b.output_dir = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  b.seed = 9;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("policy models match each environment") {
  for (const auto& name : preset_names()) {
    ExperimentConfig c = preset(name);
    auto env = make_environment(c);
    auto model = make_policy_model(c, *env);
    CHECK(model->observation_width() == env->observation_width());
    Rng rng(1);
    auto params = policy::PolicyParams::create(model, rng);
    auto s = env->reset();
    CHECK_NOTHROW(policy::act(params, s, rng));
  }
}

TEST_CASE("zero episodes gives a header-only metrics file and the initial policy") {
  const fs::path dir = scratch_dir("empty");
  ExperimentConfig c = small_config(dir);
  c.episodes = 0;
  c.eval_episodes = 0;
  auto result = run_experiment(c);
  REQUIRE(result.replications.size() == 1);
  const fs::path rep = dir / "rep_0";
  CHECK(slurp(rep / "metrics.csv") == "episode,rolling_quantile,rolling_mean,accuracy,q_tracker\n");
  CHECK_FALSE(fs::exists(rep / "eval_returns.csv"));

  auto env = make_environment(c);
  auto model = make_policy_model(c, *env);
  Rng init = make_stream(c.seed, 0, "init");
  auto agent = algos::make_agent(c.algo, model, env->horizon(), c.agent, init);
  const Checkpoint ck = load_checkpoint(rep / "checkpoint.json");
  CHECK(ck.params.theta == agent->policy().theta);
  CHECK(ck.episodes == 0);

  json manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest.at("config_hash") == config_hash(c));
  CHECK(manifest.at("schema_version") == 1);
}

TEST_CASE("training run outputs, determinism and replication isolation") {
  const fs::path dir = scratch_dir("run");
  ExperimentConfig c = small_config(dir);
  c.replications = 2;
  auto first = run_experiment(c);
  const std::vector<std::string> files = {"metrics.csv", "checkpoint.json", "eval_returns.csv", "eval_summary.json",
                                          "kde.csv"};
  std::vector<std::string> before;
  for (int r = 0; r < 2; ++r) {
    for (const auto& f : files) before.push_back(slurp(dir / ("rep_" + std::to_string(r)) / f));
  }

  auto rows = lines_of(dir / "rep_0" / "metrics.csv");
  REQUIRE(rows.size() == 31);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].rfind(std::to_string(i) + ",", 0) == 0);
  CHECK(lines_of(dir / "rep_0" / "eval_returns.csv").size() == 21);
  CHECK(before[0] != before[files.size()]);  // replications differ

  // rerun, now with two worker threads: every byte matches
  c.threads = 2;
  auto second = run_experiment(c);
  std::size_t k = 0;
  for (int r = 0; r < 2; ++r) {
    for (const auto& f : files) CHECK_MESSAGE(slurp(dir / ("rep_" + std::to_string(r)) / f) == before[k++], f);
  }
  CHECK(first.replications[1].eval_quantile == second.replications[1].eval_quantile);
  CHECK(first.replications[0].norm_violations == 0);
  CHECK(first.replications[0].max_direction_ratio <= 1.0);

  // the manifest lists both replications; the last metrics row matches the summary
  json manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest.at("replications").size() == 2);
  json summary = json::parse(slurp(dir / "rep_0" / "eval_summary.json"));
  CHECK(summary.at("quantile").get<double>() == doctest::Approx(first.replications[0].eval_quantile));
  CHECK(summary.at("accuracy").is_number());

  // evaluating the checkpoint with the same fresh stream reproduces the evaluation file
  const Checkpoint ck = load_checkpoint(dir / "rep_1" / "checkpoint.json");
  auto env = make_environment(ck.config);
  env->seed(derive_seed(ck.config.seed, 1, "eval_env"));
  auto ev = evaluate_policy(*env, ck.params, ck.config.agent.discount, 20);
  CHECK(ev.returns == load_eval_returns(dir / "rep_1"));
  REQUIRE(ev.mean_action.size() == 1);
  CHECK(ev.mean_action[0] >= 0.0);
  CHECK(ev.mean_action[0] <= 2.0);
}

TEST_CASE("window of one reports the episode return itself") {
  const fs::path dir = scratch_dir("window1");
  ExperimentConfig c = small_config(dir);
  c.window = 1;
  c.algo = "reinforce";
  c.eval_episodes = 0;
  run_experiment(c);
  auto rows = lines_of(dir / "rep_0" / "metrics.csv");
  REQUIRE(rows.size() == 31);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::stringstream ss(rows[i]);
    std::string ep, q, m, acc, tr;
    std::getline(ss, ep, ',');
    std::getline(ss, q, ',');
    std::getline(ss, m, ',');
    std::getline(ss, acc, ',');
    std::getline(ss, tr, ',');
    CHECK(q == m);
    CHECK(tr.empty());  // mean methods have no tracker
    CHECK_FALSE(acc.empty());
  }
}

TEST_CASE("compare runs") {
  const fs::path dir = scratch_dir("compare");
  fs::create_directories(dir / "a");
  fs::create_directories(dir / "b");
  fs::create_directories(dir / "pooled" / "rep_0");
  fs::create_directories(dir / "pooled" / "rep_1");
  Rng rng(5);
  std::vector<double> a(400), b(400);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = standard_normal(rng);
    b[i] = a[i] + 1.0;
  }
  write_eval_returns(dir / "a" / "eval_returns.csv", a);
  write_eval_returns(dir / "b" / "eval_returns.csv", b);
  write_eval_returns(dir / "pooled" / "rep_0" / "eval_returns.csv", std::vector<double>(a.begin(), a.begin() + 200));
  write_eval_returns(dir / "pooled" / "rep_1" / "eval_returns.csv", std::vector<double>(a.begin() + 200, a.end()));
  CHECK(load_eval_returns(dir / "a") == a);
  CHECK(load_eval_returns(dir / "pooled") == a);

  auto same = compare_runs(dir / "a", dir / "a", 0.1);
  CHECK(same.a.quantile == same.b.quantile);
  CHECK(same.a.mean == same.b.mean);
  CHECK(same.a.quantile_ci.lo == same.b.quantile_ci.lo);
  CHECK(same.a.mean_ci.hi == same.b.mean_ci.hi);

  auto shifted = compare_runs(dir / "a", dir / "b", 0.1);
  CHECK(shifted.b.quantile - shifted.a.quantile == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(shifted.b.mean - shifted.a.mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(shifted.b.quantile_ci.lo - shifted.a.quantile_ci.lo == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(shifted.a.quantile_ci.lo <= shifted.a.quantile);
  CHECK(shifted.a.quantile <= shifted.a.quantile_ci.hi);
  CHECK(format_report(shifted).find("mean [CI]") != std::string::npos);
  CHECK(to_json(shifted).at("b").at("samples") == 400);

  CHECK_THROWS_AS(compare_runs(dir / "a", dir / "missing", 0.1), ConfigError);
  fs::create_directories(dir / "empty");
  CHECK_THROWS_AS(compare_runs(dir / "empty", dir / "a", 0.1), ConfigError);
}

TEST_CASE("bootstrap interval covers the true decile at nominal 95%") {
  const double truth = normal_quantile(0.1);
  Rng rng(99);
  int covered = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> xs(500);
    for (double& x : xs) x = standard_normal(rng);
    const RunColumn col = summarize_returns("synthetic", xs, 0.1, 500, 0.95, 1000 + trial);
    if (col.quantile_ci.lo <= truth && truth <= col.quantile_ci.hi) ++covered;
  }
  MESSAGE("covered " << covered << " of 100");
  CHECK(covered >= 93);
}
