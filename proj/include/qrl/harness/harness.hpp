#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qrl/algos/agents.hpp"
#include "qrl/envs/environment.hpp"
#include "qrl/policy/policy.hpp"

namespace qrl::harness {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

/// Policy network shape. Temporal conv layers (kernel `kernel`) run first when the
/// environment exposes a history, then the dense hidden layers.
struct NetworkSpec {
  std::vector<std::size_t> conv;
  std::size_t kernel = 3;
  std::vector<std::size_t> hidden{8, 8};
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string algo = "qppo";
  /// zero_mean_simple, zero_mean_hard, portfolio_perfect, portfolio_imperfect,
  /// inventory_single, inventory_multi.
  std::string env = "zero_mean_simple";
  /// Inventory only: demand model document (see envs::demand_model_from_json).
  nlohmann::json demand = nullptr;
  /// 0 keeps the environment's own horizon.
  std::size_t horizon = 0;
  /// Portfolio only: initial log standard deviation of the simplex head's Gaussian latent.
  double action_log_std = -0.5;
  algos::AgentConfig agent;
  NetworkSpec network;
  std::size_t episodes = 5000;
  std::size_t replications = 1;
  std::uint64_t seed = 1;
  std::size_t window = 100;
  std::size_t eval_episodes = 1000;
  std::string output_dir = "runs/experiment";
  /// Worker threads for replications; 0 picks the hardware concurrency.
  std::size_t threads = 0;
};

/// Named starting points mirroring the hyperparameter tables. Throws ConfigError.
ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// Parses a config document. A "preset" key selects the base; every other key overrides it.
/// Unknown keys, wrong types and invalid values throw ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);
/// Checks the invariants and builds the environment, model and agent once so that any
/// rejection happens before simulation. Throws ConfigError.
void validate(const ExperimentConfig& cfg);
/// FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

std::unique_ptr<envs::Environment> make_environment(const ExperimentConfig& cfg);
std::shared_ptr<const policy::PolicyModel> make_policy_model(const ExperimentConfig& cfg,
                                                             const envs::Environment& env);

struct RollingStats {
  double quantile = 0.0;
  double mean = 0.0;
};

/// Order statistic ceil(alpha * n) and arithmetic mean of a non-empty window.
RollingStats rolling_stats(std::span<const double> window, double alpha);

/// 1.06 * sample sd * n^(-1/5).
double silverman_bandwidth(std::span<const double> samples);

struct KdeHint {
  double bandwidth = 0.0;
  bool degenerate = false;
};

/// Writes `return,bandwidth,degenerate` rows. Needs at least two samples (UsageError).
KdeHint emit_kde_data(std::span<const double> returns, const std::filesystem::path& path);

struct Evaluation {
  std::vector<double> returns;
  double accuracy = 0.0;            // NaN when the environment has no task metric
  std::vector<double> mean_action;  // action value (or discrete choice) averaged over all steps
};

/// Mode-action episodes from the environment's current stream.
Evaluation evaluate_policy(envs::Environment& env, const policy::PolicyParams& params, double discount,
                           std::size_t episodes);

struct ReplicationSummary {
  std::size_t replication = 0;
  std::filesystem::path directory;
  std::size_t episodes = 0;
  double final_rolling_quantile = 0.0;
  double final_rolling_mean = 0.0;
  double final_accuracy = 0.0;  // rolling, NaN without a task metric
  double final_tracker = 0.0;
  double eval_quantile = 0.0;
  double eval_mean = 0.0;
  double eval_accuracy = 0.0;
  std::vector<double> eval_mean_action;
  std::size_t norm_violations = 0;
  double max_direction_ratio = 0.0;  // largest ||D|| / (T * scoreBound)
  double wall_clock_seconds = 0.0;
};

struct ExperimentResult {
  std::filesystem::path directory;
  std::string config_hash;
  std::vector<ReplicationSummary> replications;
};

/// Trains every replication (concurrently when threads allow) and writes, per replication,
/// rep_<i>/{metrics.csv, checkpoint.json, eval_returns.csv, eval_summary.json, kde.csv},
/// plus manifest.json at the top. Only manifest.json carries wall-clock fields.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Trains one replication into `dir`.
ReplicationSummary run_replication(const ExperimentConfig& cfg, std::size_t replication,
                                   const std::filesystem::path& dir);

/// Checkpoint loading for `evaluate`.
struct Checkpoint {
  ExperimentConfig config;
  std::size_t replication = 0;
  std::size_t episodes = 0;
  policy::PolicyParams params;
  nlohmann::json tracker;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Evaluation returns of a run directory: its own eval_returns.csv, or those of every
/// rep_* subdirectory pooled in order. Throws ConfigError when none exist.
std::vector<double> load_eval_returns(const std::filesystem::path& dir);
void write_eval_returns(const std::filesystem::path& path, std::span<const double> returns);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct RunColumn {
  std::string label;
  std::size_t samples = 0;
  double quantile = 0.0;
  Interval quantile_ci;
  double mean = 0.0;
  Interval mean_ci;
};

struct CompareReport {
  double alpha = 0.1;
  double confidence = 0.95;
  RunColumn a, b;
};

/// Percentile bootstrap interval for the alpha-quantile and the mean.
RunColumn summarize_returns(std::string label, std::span<const double> returns, double alpha,
                            std::size_t resamples, double confidence, std::uint64_t seed);
CompareReport compare_runs(const std::filesystem::path& a, const std::filesystem::path& b, double alpha,
                           std::size_t resamples = 1000, double confidence = 0.95, std::uint64_t seed = 7);
std::string format_report(const CompareReport& report);
nlohmann::json to_json(const CompareReport& report);

}  // namespace qrl::harness
