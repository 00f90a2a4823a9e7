#include "qrl/oracles/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "qrl/errors.hpp"
#include "qrl/normal.hpp"
#include "qrl/order_statistics.hpp"

namespace qrl::oracles {

QuantileEstimate quantile_of_sample(std::vector<double> samples, double alpha, Rng& rng, std::size_t bootstrap) {
  if (samples.empty()) throw ConfigError("quantile_of_sample: empty sample");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  const std::size_t k = order_statistic_rank(alpha, n);  // 1-based
  QuantileEstimate est{samples[k - 1], 0.0, n};
  if (bootstrap < 2) return est;
  std::gamma_distribution<double> ga(static_cast<double>(k), 1.0), gb(static_cast<double>(n - k + 1), 1.0);
  std::vector<double> reps(bootstrap);
  for (double& x : reps) {
    const double a = ga(rng), b = gb(rng);
    const auto idx = std::min(n - 1, static_cast<std::size_t>(static_cast<double>(n) * a / (a + b)));
    x = samples[idx];
  }
  est.standard_error = stddev_of(reps);
  return est;
}

QuantileEstimate mc_quantile(const std::function<double(Rng&)>& sampler, double alpha, std::size_t n, Rng& rng) {
  if (n < 100) throw ConfigError("mc_quantile needs at least 100 samples");
  std::vector<double> xs(n);
  for (double& x : xs) x = sampler(rng);
  return quantile_of_sample(std::move(xs), alpha, rng);
}

double replicated_return(envs::Environment& env, const policy::PolicyParams& params, double discount,
                         std::uint64_t seed, std::uint64_t rep) {
  env.seed(derive_seed(seed, rep, "env"));
  Rng pol = make_stream(seed, rep, "policy");
  auto s = env.reset();
  double total = 0.0, weight = 1.0;
  for (bool done = false; !done;) {
    const auto step = env.step(policy::act(params, s, pol).action);
    total += weight * step.reward;
    weight *= discount;
    s = step.observation;
    done = step.done;
  }
  return total;
}

GradientEstimate fd_cdf_gradient(envs::Environment& env, const policy::PolicyParams& params, double r, double delta,
                                 std::size_t n_per_point, double discount, std::uint64_t seed) {
  if (!(delta > 0.0)) throw ConfigError("fd_cdf_gradient: delta must be positive");
  if (n_per_point < 2) throw ConfigError("fd_cdf_gradient: need at least 2 samples per point");
  const std::size_t dim = params.theta.size();
  GradientEstimate g{std::vector<double>(dim), std::vector<double>(dim)};
  std::vector<double> diffs(n_per_point);
  for (std::size_t i = 0; i < dim; ++i) {
    policy::PolicyParams plus = params, minus = params;
    plus.theta[i] += delta;
    minus.theta[i] -= delta;
    for (std::size_t j = 0; j < n_per_point; ++j) {
      const double fp = replicated_return(env, plus, discount, seed, j) <= r ? 1.0 : 0.0;
      const double fm = replicated_return(env, minus, discount, seed, j) <= r ? 1.0 : 0.0;
      diffs[j] = (fp - fm) / (2.0 * delta);
    }
    g.value[i] = mean_of(diffs);
    g.standard_error[i] = stddev_of(diffs) / std::sqrt(static_cast<double>(n_per_point));
  }
  return g;
}

// ---------------------------------------------------------------- Markowitz

double markowitz_objective(std::span<const double> w, std::span<const double> drift, std::span<const double> vol_root,
                           double dt, std::size_t horizon, Criterion criterion, double alpha) {
  const std::size_t n = drift.size();
  const double t = static_cast<double>(horizon);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += w[i] * drift[i];
  mean *= t * dt;
  if (criterion == Criterion::mean) return mean;
  // |vol_root^T w|: column j of vol_root dotted with w.
  double sq = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += vol_root[i * n + j] * w[i];
    sq += c * c;
  }
  return mean + normal_quantile(alpha) * std::sqrt(t * dt) * std::sqrt(sq);
}

std::vector<double> project_to_simplex(std::span<const double> v) {
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0, tau = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cumulative += u[i];
    const double t = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) tau = t;
  }
  std::vector<double> w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = std::max(v[i] - tau, 0.0);
  return w;
}

namespace {

// Visits every composition of `units` into `n` parts.
template <class Visit>
void compositions(std::size_t n, std::size_t units, std::vector<std::size_t>& parts, std::size_t i, Visit& visit) {
  if (i + 1 == n) {
    parts[i] = units;
    visit(parts);
    return;
  }
  for (std::size_t k = 0; k <= units; ++k) {
    parts[i] = k;
    compositions(n, units - k, parts, i + 1, visit);
  }
}

}  // namespace

MarkowitzSolution markowitz_alloc(std::span<const double> drift, std::span<const double> vol_root, double dt,
                                  std::size_t horizon, Criterion criterion, double alpha) {
  const std::size_t n = drift.size();
  if (n == 0 || vol_root.size() != n * n) throw ConfigError("markowitz_alloc: drift and vol_root sizes disagree");
  auto f = [&](std::span<const double> w) { return markowitz_objective(w, drift, vol_root, dt, horizon, criterion, alpha); };

  const std::size_t units = n <= 3 ? 1000 : 20;
  std::vector<std::pair<double, std::vector<double>>> best;  // a few top grid points
  const std::size_t keep = n <= 3 ? 1 : 8;
  std::vector<std::size_t> parts(n);
  std::vector<double> w(n);
  auto visit = [&](const std::vector<std::size_t>& p) {
    for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<double>(p[i]) / static_cast<double>(units);
    const double v = f(w);
    if (best.size() < keep || v > best.back().first) {
      best.emplace_back(v, w);
      std::sort(best.begin(), best.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      if (best.size() > keep) best.pop_back();
    }
  };
  compositions(n, units, parts, 0, visit);

  MarkowitzSolution sol{best.front().second, best.front().first};
  if (n > 3) {
    // Projected gradient ascent with numerical gradients and backtracking from the top grid points.
    for (const auto& [v0, start] : best) {
      std::vector<double> x = start;
      double fx = v0, step = 0.05;
      for (int it = 0; it < 2000 && step > 1e-10; ++it) {
        std::vector<double> grad(n);
        for (std::size_t i = 0; i < n; ++i) {
          auto xp = x, xm = x;
          xp[i] += 1e-7;
          xm[i] -= 1e-7;
          grad[i] = (f(xp) - f(xm)) / 2e-7;
        }
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + step * grad[i];
        y = project_to_simplex(y);
        const double fy = f(y);
        if (fy > fx) {
          x = std::move(y);
          fx = fy;
          step *= 1.2;
        } else {
          step *= 0.5;
        }
      }
      if (fx > sol.objective) sol = {x, fx};
    }
  }
  return sol;
}

// ---------------------------------------------------------------- truncation

TruncationReport truncation_gap_check(envs::Environment& env, const policy::PolicyParams& params, double eta,
                                      std::size_t first, std::size_t last, std::size_t n, std::uint64_t seed,
                                      double alpha) {
  if (first == 0 || first > last || last > env.horizon()) throw ConfigError("truncation range needs 1 <= T0 <= T <= horizon");
  if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("truncation check needs a discount in (0, 1)");
  const double c_r = env.reward_bound();
  if (!std::isfinite(c_r)) throw ConfigError("truncation check needs a bounded reward");
  const std::size_t width = last - first + 1;
  std::vector<std::vector<double>> prefix(width, std::vector<double>(n));
  for (std::size_t j = 0; j < n; ++j) {
    env.seed(derive_seed(seed, j, "env"));
    Rng pol = make_stream(seed, j, "policy");
    auto s = env.reset();
    double total = 0.0, weight = 1.0;
    for (std::size_t t = 0; t < last; ++t) {
      const auto step = env.step(policy::act(params, s, pol).action);
      total += weight * step.reward;
      weight *= eta;
      s = step.observation;
      if (t + 1 >= first) prefix[t + 1 - first][j] = total;
      if (step.done && t + 1 < last) throw TrainingError("episode ended before the last truncation horizon");
    }
  }
  Rng boot = make_stream(seed, 0, "bootstrap");
  TruncationReport rep;
  rep.reward_bound = c_r;
  const auto q_t = quantile_of_sample(prefix.back(), alpha, boot);
  for (std::size_t l = first; l <= last; ++l) {
    const auto q_l = quantile_of_sample(prefix[l - first], alpha, boot);
    TruncationRow row;
    row.horizon = l;
    row.q_l = q_l.value;
    row.q_T = q_t.value;
    row.gap = std::abs(q_l.value - q_t.value);
    row.bound = std::pow(eta, static_cast<double>(l)) * c_r / (1.0 - eta);
    row.standard_error = l == last ? 0.0 : std::hypot(q_l.standard_error, q_t.standard_error);
    row.pass = row.gap <= row.bound + 3.0 * row.standard_error;
    if (!row.pass && rep.pass) {
      rep.pass = false;
      rep.offending_horizon = l;
    }
    rep.rows.push_back(row);
  }
  return rep;
}

nlohmann::json to_json(const TruncationReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"horizon", r.horizon},
                    {"q_l", r.q_l},
                    {"q_T", r.q_T},
                    {"gap", r.gap},
                    {"bound", r.bound},
                    {"standard_error", r.standard_error},
                    {"pass", r.pass}});
  }
  return {{"name", "truncation_gap_check"},
          {"reward_bound", report.reward_bound},
          {"pass", report.pass},
          {"offending_horizon", report.offending_horizon},
          {"rows", rows}};
}

// ---------------------------------------------------------------- enumeration

double ExactDistribution::cdf(double r) const {
  double total = 0.0;
  for (std::size_t i = 0; i < values.size() && values[i] <= r; ++i) total += probs[i];
  return total;
}

double ExactDistribution::quantile(double alpha) const {
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    total += probs[i];
    if (total >= alpha - 1e-12) return values[i];
  }
  return values.back();
}

double ExactDistribution::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) m += values[i] * probs[i];
  return m;
}

ExactDistribution enumerate_small_mdp(const envs::TabularMdp& mdp, const policy::PolicyParams& params,
                                      double discount) {
  mdp.validate();
  if (mdp.states > 3 || mdp.actions > 3 || mdp.horizon > 3) {
    throw ConfigError("enumerate_small_mdp handles at most 3 states, 3 actions and 3 steps");
  }
  if (params.model->action_spec().kind != policy::ActionSpec::Kind::categorical ||
      params.model->action_spec().choices != mdp.actions || params.model->observation_width() != mdp.states) {
    throw ConfigError("enumerate_small_mdp needs a categorical policy on one-hot states");
  }
  std::vector<std::vector<double>> pi(mdp.states);
  for (std::size_t s = 0; s < mdp.states; ++s) {
    std::vector<double> onehot(mdp.states, 0.0);
    onehot[s] = 1.0;
    pi[s] = policy::softmax(params.model->head_outputs(params.theta, onehot)[0]);
  }
  std::vector<std::pair<double, double>> leaves;  // (return, probability)
  auto walk = [&](auto&& self, std::size_t s, std::size_t t, double ret, double weight, double prob) -> void {
    if (prob == 0.0) return;
    if (t == mdp.horizon) {
      leaves.emplace_back(ret, prob);
      return;
    }
    for (std::size_t a = 0; a < mdp.actions; ++a) {
      const auto& law = mdp.r(s, a);
      for (std::size_t k = 0; k < law.value.size(); ++k) {
        for (std::size_t next = 0; next < mdp.states; ++next) {
          self(self, next, t + 1, ret + weight * law.value[k], weight * discount,
               prob * pi[s][a] * law.prob[k] * mdp.p(s, a, next));
        }
      }
    }
  };
  for (std::size_t s = 0; s < mdp.states; ++s) walk(walk, s, 0, 0.0, 1.0, mdp.initial[s]);
  std::sort(leaves.begin(), leaves.end());
  ExactDistribution d;
  for (const auto& [v, p] : leaves) {
    if (!d.values.empty() && std::abs(v - d.values.back()) <= 1e-12) {
      d.probs.back() += p;
    } else {
      d.values.push_back(v);
      d.probs.push_back(p);
    }
  }
  return d;
}

std::vector<double> exact_cdf_gradient(const envs::TabularMdp& mdp, const policy::PolicyParams& params, double r,
                                       double discount, double delta) {
  std::vector<double> g(params.theta.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto plus = params, minus = params;
    plus.theta[i] += delta;
    minus.theta[i] -= delta;
    g[i] = (enumerate_small_mdp(mdp, plus, discount).cdf(r) - enumerate_small_mdp(mdp, minus, discount).cdf(r)) /
           (2.0 * delta);
  }
  return g;
}

nlohmann::json report(const std::string& name, double estimate, double bound, double standard_error, bool pass) {
  return {{"name", name}, {"estimate", estimate}, {"bound", bound}, {"standard_error", standard_error}, {"pass", pass}};
}

}  // namespace qrl::oracles
