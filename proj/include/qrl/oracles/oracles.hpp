#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qrl/envs/environment.hpp"
#include "qrl/envs/tabular.hpp"
#include "qrl/policy/policy.hpp"
#include "qrl/random.hpp"

namespace qrl::oracles {

struct QuantileEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  std::size_t sample_count = 0;
};

/// Order statistic of rank ceil(alpha n) of an existing sample, with bootstrap standard error.
/// The bootstrap draws the resampled order statistic directly: its index is floor(n U) with
/// U ~ Beta(k, n - k + 1), which is what resampling n indices with replacement produces.
QuantileEstimate quantile_of_sample(std::vector<double> samples, double alpha, Rng& rng,
                                    std::size_t bootstrap = 400);

/// Draws n >= 100 values from `sampler` and estimates its alpha-quantile.
QuantileEstimate mc_quantile(const std::function<double(Rng&)>& sampler, double alpha, std::size_t n, Rng& rng);

struct GradientEstimate {
  std::vector<double> value;
  std::vector<double> standard_error;
};

/// Discounted return of one episode where env and policy draw from the streams of replication `rep`.
double replicated_return(envs::Environment& env, const policy::PolicyParams& params, double discount,
                         std::uint64_t seed, std::uint64_t rep);

/// Central difference (F(r; theta + delta e_i) - F(r; theta - delta e_i)) / (2 delta) of the
/// Monte-Carlo CDF, with common random numbers: replication j uses the same environment and
/// policy streams in both legs and across coordinates.
GradientEstimate fd_cdf_gradient(envs::Environment& env, const policy::PolicyParams& params, double r, double delta,
                                 std::size_t n_per_point, double discount, std::uint64_t seed);

enum class Criterion { mean, quantile };

struct MarkowitzSolution {
  std::vector<double> weights;
  double objective = 0.0;
};

/// Objective of allocation w over the horizon, ignoring compounding and fees:
/// T w.mu dt for the mean, plus z_alpha sqrt(T dt) |vol_root^T w| for the alpha-quantile.
double markowitz_objective(std::span<const double> w, std::span<const double> drift, std::span<const double> vol_root,
                           double dt, std::size_t horizon, Criterion criterion, double alpha);

/// Maximizes the objective over the simplex. Three or fewer assets: exhaustive grid at step
/// 1e-3. More: grid at step 0.05, then projected gradient ascent from the best grid points.
MarkowitzSolution markowitz_alloc(std::span<const double> drift, std::span<const double> vol_root, double dt,
                                  std::size_t horizon, Criterion criterion, double alpha = 0.1);

/// Euclidean projection onto the probability simplex.
std::vector<double> project_to_simplex(std::span<const double> v);

struct TruncationRow {
  std::size_t horizon = 0;
  double q_l = 0.0;
  double q_T = 0.0;
  double gap = 0.0;
  double bound = 0.0;
  double standard_error = 0.0;
  bool pass = true;
};

struct TruncationReport {
  std::vector<TruncationRow> rows;
  double reward_bound = 0.0;
  bool pass = true;
  /// First offending horizon, 0 if none.
  std::size_t offending_horizon = 0;
};

/// For l in [T0, T], estimates the alpha-quantiles q^l and q^T from n common trajectories and checks
/// |q^l - q^T| <= eta^l C_r / (1 - eta) + 3 sqrt(se_l^2 + se_T^2). C_r is env.reward_bound().
TruncationReport truncation_gap_check(envs::Environment& env, const policy::PolicyParams& params, double eta,
                                      std::size_t first, std::size_t last, std::size_t n, std::uint64_t seed,
                                      double alpha = 0.25);

nlohmann::json to_json(const TruncationReport& report);

/// Exact law of the discounted return: sorted distinct values with their probabilities.
struct ExactDistribution {
  std::vector<double> values;
  std::vector<double> probs;

  double cdf(double r) const;
  /// Smallest value whose CDF reaches alpha.
  double quantile(double alpha) const;
  double mean() const;
};

/// Enumerates every trajectory of a tabular MDP (<= 3 states, <= 3 actions, T <= 3) under a
/// categorical policy on one-hot observations. Throws ConfigError beyond those limits.
ExactDistribution enumerate_small_mdp(const envs::TabularMdp& mdp, const policy::PolicyParams& params,
                                      double discount = 1.0);

/// Exact d F_R(r; theta) / d theta by central differences of the enumerated CDF.
std::vector<double> exact_cdf_gradient(const envs::TabularMdp& mdp, const policy::PolicyParams& params, double r,
                                       double discount = 1.0, double delta = 1e-5);

/// Uniform JSON record consumed by the acceptance suite.
nlohmann::json report(const std::string& name, double estimate, double bound, double standard_error, bool pass);

}  // namespace qrl::oracles
