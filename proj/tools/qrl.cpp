#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "qrl/errors.hpp"
#include "qrl/harness/harness.hpp"
#include "qrl/order_statistics.hpp"
#include "qrl/verify/acceptance.hpp"

namespace fs = std::filesystem;
using namespace qrl;

namespace {

int train(const std::string& config_path, const std::string& preset_name, std::optional<std::uint64_t> seed,
          const std::string& out, std::optional<std::string> algo, std::optional<std::size_t> episodes) {
  harness::ExperimentConfig cfg =
      config_path.empty() ? harness::preset(preset_name) : harness::load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.output_dir = out;
  if (algo) cfg.algo = *algo;
  if (episodes) cfg.episodes = *episodes;
  const auto result = harness::run_experiment(cfg);
  std::printf("%s  config %s  -> %s\n", cfg.algo.c_str(), result.config_hash.c_str(), result.directory.c_str());
  for (const auto& r : result.replications) {
    std::printf("rep %zu: rolling q%.2g %.4f  mean %.4f", r.replication, cfg.agent.alpha, r.final_rolling_quantile,
                r.final_rolling_mean);
    if (!std::isnan(r.final_accuracy)) std::printf("  accuracy %.3f", r.final_accuracy);
    if (cfg.eval_episodes) std::printf("  | test q %.4f  mean %.4f", r.eval_quantile, r.eval_mean);
    std::printf("  (%.1fs)\n", r.wall_clock_seconds);
  }
  return 0;
}

int evaluate(const std::string& checkpoint_path, std::size_t episodes, std::uint64_t seed, std::string out) {
  const auto ck = harness::load_checkpoint(checkpoint_path);
  auto env = harness::make_environment(ck.config);
  env->seed(derive_seed(seed, ck.replication, "eval_env"));
  const auto ev = harness::evaluate_policy(*env, ck.params, ck.config.agent.discount, episodes);
  if (out.empty()) out = (fs::path(checkpoint_path).parent_path() / "eval_returns.csv").string();
  harness::write_eval_returns(out, ev.returns);
  std::printf("%zu episodes: q%.2g %.4f  mean %.4f", episodes, ck.config.agent.alpha,
              empirical_quantile(ev.returns, ck.config.agent.alpha), mean_of(ev.returns));
  if (!std::isnan(ev.accuracy)) std::printf("  accuracy %.3f", ev.accuracy);
  std::printf("\nmean action:");
  for (double a : ev.mean_action) std::printf(" %.4f", a);
  std::printf("\nwrote %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantile-criterion policy gradient experiments"};
  app.require_subcommand(1);

  auto* tr = app.add_subcommand("train", "train from a config file or preset");
  std::string config_path, preset_name = "zero_mean_simple", out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> algo;
  std::optional<std::size_t> episodes;
  tr->add_option("--config", config_path, "JSON config")->check(CLI::ExistingFile);
  tr->add_option("--preset", preset_name, "preset used when no config is given");
  tr->add_option("--seed", seed, "master seed");
  tr->add_option("--out", out, "output directory");
  tr->add_option("--algo", algo, "qpo, qppo, reinforce, ppo or spsa");
  tr->add_option("--episodes", episodes, "training episodes");

  auto* ev = app.add_subcommand("evaluate", "mode-action evaluation of a checkpoint");
  std::string checkpoint, eval_out;
  std::size_t eval_episodes = 1000;
  std::uint64_t eval_seed = 1;
  ev->add_option("--checkpoint", checkpoint, "checkpoint.json")->required()->check(CLI::ExistingFile);
  ev->add_option("--episodes", eval_episodes, "evaluation episodes");
  ev->add_option("--seed", eval_seed, "seed of the fresh evaluation stream");
  ev->add_option("--out", eval_out, "eval_returns.csv destination (default: next to the checkpoint)");

  auto* cmp = app.add_subcommand("compare", "quantile and mean of two runs with bootstrap intervals");
  std::string dir_a, dir_b;
  double alpha = 0.1;
  std::size_t resamples = 1000;
  bool as_json = false;
  cmp->add_option("--a", dir_a, "first run directory")->required();
  cmp->add_option("--b", dir_b, "second run directory")->required();
  cmp->add_option("--alpha", alpha, "quantile level");
  cmp->add_option("--resamples", resamples, "bootstrap resamples");
  cmp->add_flag("--json", as_json, "print JSON instead of a table");

  auto* ver = app.add_subcommand("verify", "run the acceptance suite");
  verify::AcceptanceOptions vopt;
  std::string work_dir = vopt.work_dir.string(), unit_dir;
  ver->add_option("--only", vopt.only, "criteria to run (1-9)");
  ver->add_option("--seed", vopt.seed, "master seed");
  ver->add_option("--work-dir", work_dir, "where training runs are written");
  ver->add_option("--unit-tests", unit_dir, "directory of unit-test executables for criterion 9");
  ver->add_option("--threads", vopt.threads, "replication threads");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*tr) return train(config_path, preset_name, seed, out, algo, episodes);
    if (*ev) return evaluate(checkpoint, eval_episodes, eval_seed, eval_out);
    if (*cmp) {
      const auto report = harness::compare_runs(dir_a, dir_b, alpha, resamples);
      if (as_json) std::cout << harness::to_json(report).dump(2) << '\n';
      else std::cout << harness::format_report(report);
      return 0;
    }
    if (*ver) {
      vopt.work_dir = work_dir;
      vopt.unit_test_dir = unit_dir;
      const auto results = verify::run_acceptance(vopt, std::cout);
      int failed = 0;
      for (const auto& r : results) failed += r.pass ? 0 : 1;
      return failed;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
