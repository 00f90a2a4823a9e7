#include <algorithm>
#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "qrl/algos/estimators.hpp"
#include "qrl/algos/toy.hpp"
#include "qrl/algos/trajectory.hpp"
#include "qrl/envs/inventory.hpp"
#include "qrl/envs/portfolio.hpp"
#include "qrl/envs/tabular.hpp"
#include "qrl/envs/zero_mean.hpp"
#include "qrl/harness/harness.hpp"
#include "qrl/oracles/oracles.hpp"
#include "qrl/order_statistics.hpp"
#include "qrl/quantile/tracker.hpp"
#include "qrl/verify/acceptance.hpp"

namespace qrl::verify {

namespace fs = std::filesystem;
using harness::ExperimentConfig;
using harness::ReplicationSummary;

namespace {

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Suite {
 public:
  Suite(const AcceptanceOptions& o, std::ostream& out) : opt_(o), out_(out) {}

  // Zero-Mean simple runs at the table settings, shared by criteria 1 and 4.
  const std::vector<ReplicationSummary>& zero_mean(const std::string& algo) {
    auto it = zero_mean_.find(algo);
    if (it != zero_mean_.end()) return it->second;
    ExperimentConfig c = harness::preset("zero_mean_simple");
    c.algo = algo;
    c.episodes = 5000;
    c.replications = 3;
    c.eval_episodes = 0;
    return zero_mean_[algo] = train(c, "zero_mean_" + algo);
  }

  std::vector<ReplicationSummary> train(ExperimentConfig c, const std::string& name) {
    c.seed = opt_.seed;
    c.threads = opt_.threads;
    c.output_dir = (opt_.work_dir / name).string();
    out_ << "  training " << name << " (" << c.replications << " x " << c.episodes << " episodes)" << std::endl;
    return harness::run_experiment(c).replications;
  }

  CriterionResult c1();
  CriterionResult c2();
  CriterionResult c3();
  CriterionResult c4();
  CriterionResult c5();
  CriterionResult c6();
  CriterionResult c7();
  CriterionResult c8();
  CriterionResult c9();

 private:
  const AcceptanceOptions& opt_;
  std::ostream& out_;
  std::map<std::string, std::vector<ReplicationSummary>> zero_mean_;
};

std::string per_seed(const std::vector<ReplicationSummary>& runs, double ReplicationSummary::*field) {
  std::string s;
  for (const auto& r : runs) s += fmt("%s%.3f", s.empty() ? "" : " ", r.*field);
  return s;
}

double seed_mean(const std::vector<ReplicationSummary>& runs, double ReplicationSummary::*field) {
  double s = 0.0;
  for (const auto& r : runs) s += r.*field;
  return s / static_cast<double>(runs.size());
}

CriterionResult Suite::c1() {
  CriterionResult r{1, "Zero-Mean separation"};
  const auto& qpo = zero_mean("qpo");
  const auto& qppo = zero_mean("qppo");
  const auto& reinforce = zero_mean("reinforce");
  const auto& ppo = zero_mean("ppo");
  bool ok = true;
  struct Row {
    const char* name;
    const std::vector<ReplicationSummary>* runs;
    bool quantile_method;
  };
  for (const Row& row : {Row{"qpo", &qpo, true}, Row{"qppo", &qppo, true}, Row{"reinforce", &reinforce, false},
                         Row{"ppo", &ppo, false}}) {
    const auto& [name, runs, quantile_method] = row;
    const double acc = seed_mean(*runs, &ReplicationSummary::final_accuracy);
    const bool good = quantile_method ? acc >= 0.8 : acc <= 0.45;
    ok = ok && good;
    r.details.push_back(fmt("%-9s accuracy mean %.3f (seeds %s) %s %.2f%s", name, acc,
                            per_seed(*runs, &ReplicationSummary::final_accuracy).c_str(),
                            quantile_method ? ">=" : "<=", quantile_method ? 0.8 : 0.45, good ? "" : "  <- miss"));
  }
  int wins = 0;
  for (std::size_t i = 0; i < qppo.size(); ++i) {
    wins += qppo[i].final_rolling_quantile > qpo[i].final_rolling_quantile ? 1 : 0;
  }
  r.details.push_back(fmt("final rolling 0.25-quantile qppo %s vs qpo %s: qppo ahead in %d of 3",
                          per_seed(qppo, &ReplicationSummary::final_rolling_quantile).c_str(),
                          per_seed(qpo, &ReplicationSummary::final_rolling_quantile).c_str(), wins));
  r.pass = ok && wins >= 2;
  return r;
}

CriterionResult Suite::c2() {
  CriterionResult r{2, "quantile tracker convergence"};
  const auto schedule = quantile::StepSchedule::polynomial(0.5, 0.7);
  r.pass = true;
  for (double alpha : {0.1, 0.5, 0.9}) {
    double worst = 0.0;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
      Rng rng = make_stream(opt_.seed, rep, "tracker");
      quantile::QuantileTracker t(0.0, alpha, schedule);
      for (int k = 0; k < 200000; ++k) quantile::sa_step(t, uniform01(rng));
      worst = std::max(worst, std::abs(t.q - alpha));
    }
    r.pass = r.pass && worst <= 0.02;
    r.details.push_back(fmt("alpha %.1f: worst |q_K - alpha| over 20 runs %.4f (<= 0.02)", alpha, worst));
  }
  return r;
}

CriterionResult Suite::c3() {
  CriterionResult r{3, "estimator unbiasedness"};
  // one state, two arms with stochastic payouts; 2 parameters (bias-free logits)
  const auto mdp = envs::TabularMdp::bandit({{{-1.0, 1.0}, {0.5, 0.5}}, {{0.0, 2.0}, {0.3, 0.7}}});
  ad::Architecture arch;
  arch.input_dim = 1;
  arch.heads.push_back(ad::LayerSpec{.out = 2, .act = ad::Activation::identity, .bias = false});
  auto model = std::make_shared<policy::PolicyModel>(arch, policy::ActionSpec::categorical(2));
  const policy::PolicyParams params{model, {0.3, -0.2}};
  const double level = 0.5;
  const std::size_t n = 200000;

  envs::TabularEnv env(mdp);
  env.seed(derive_seed(opt_.seed, 0, "env"));
  Rng policy_rng = make_stream(opt_.seed, 0, "policy");
  std::vector<double> sum(2, 0.0), sq(2, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto traj = algos::rollout(env, params, policy_rng);
    const auto d = algos::descent_direction(traj, params, level, 1.0);
    for (std::size_t j = 0; j < 2; ++j) {
      sum[j] += d[j];
      sq[j] += d[j] * d[j];
    }
  }
  envs::TabularEnv fd_env(mdp);
  const auto fd = oracles::fd_cdf_gradient(fd_env, params, level, 0.05, n, 1.0, opt_.seed + 1);
  const auto exact = oracles::exact_cdf_gradient(mdp, params, level);
  r.pass = true;
  for (std::size_t j = 0; j < 2; ++j) {
    const double mean = sum[j] / n;
    const double se = std::sqrt(std::max(sq[j] / n - mean * mean, 0.0) / (n - 1));
    // D estimates -grad F
    const double gap_fd = std::abs(mean + fd.value[j]);
    const double se_fd = std::sqrt(se * se + fd.standard_error[j] * fd.standard_error[j]);
    const double gap_exact = std::abs(mean + exact[j]);
    const bool ok = gap_fd <= 3.0 * se_fd && gap_exact <= 3.0 * se;
    r.pass = r.pass && ok;
    r.details.push_back(fmt("coord %zu: mean D %.5f (se %.5f), -FD %.5f (se %.5f), -exact %.5f; gaps %.2f / %.2f se",
                            j, mean, se, -fd.value[j], fd.standard_error[j], -exact[j], gap_fd / se_fd,
                            gap_exact / se));
  }
  return r;
}

CriterionResult Suite::c4() {
  CriterionResult r{4, "direction norm bound"};
  std::size_t violations = 0;
  double worst = 0.0;
  for (const char* algo : {"qpo", "qppo"}) {
    std::size_t count = 0;
    for (const auto& run : zero_mean(algo)) {
      count += run.norm_violations;
      worst = std::max(worst, run.max_direction_ratio);
    }
    violations += count;
    r.details.push_back(fmt("%s: %zu violations over 3 x 5000 episodes", algo, count));
  }
  r.details.push_back(fmt("largest ||D|| / (T scoreBound) = %.4g", worst));
  r.pass = violations == 0;
  return r;
}

CriterionResult Suite::c5() {
  CriterionResult r{5, "truncation bound"};
  ExperimentConfig c = harness::preset("zero_mean_simple");
  auto env = harness::make_environment(c);
  Rng init = make_stream(opt_.seed, 0, "init");
  const auto params = policy::PolicyParams::create(harness::make_policy_model(c, *env), init);
  const auto report = oracles::truncation_gap_check(*env, params, 0.99, 16, 20, 100000, opt_.seed);
  for (const auto& row : report.rows) {
    r.details.push_back(fmt("l=%zu: |q^l - q^T| = %.4f, allowed %.4f %s", row.horizon, std::abs(row.gap),
                            row.bound + 3.0 * row.standard_error, row.pass ? "" : "<- miss"));
  }
  r.pass = report.pass && report.rows.size() == 5;
  return r;
}

CriterionResult Suite::c6() {
  CriterionResult r{6, "Markowitz agreement"};
  const auto market = envs::MarketParams::perfectly_hedgeable();
  const double dt = 0.01;
  const auto mean_sol =
      oracles::markowitz_alloc(market.drift, market.vol_root, dt, 100, oracles::Criterion::mean);
  const auto q_sol =
      oracles::markowitz_alloc(market.drift, market.vol_root, dt, 100, oracles::Criterion::quantile, 0.1);
  auto near = [](const std::vector<double>& w, std::vector<double> target) {
    double d = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) d += std::abs(w[i] - target[i]);
    return d;
  };
  const bool oracle_ok = near(mean_sol.weights, {0, 0, 1}) < 1e-9 && near(q_sol.weights, {0, 0.5, 0.5}) < 1e-9;
  r.details.push_back(fmt("oracle mean criterion (%.3f %.3f %.3f), 0.1-quantile criterion (%.3f %.3f %.3f)",
                          mean_sol.weights[0], mean_sol.weights[1], mean_sol.weights[2], q_sol.weights[0],
                          q_sol.weights[1], q_sol.weights[2]));

  ExperimentConfig c = harness::preset("portfolio_perfect");
  c.episodes = 20000;
  c.algo = "qppo";
  const auto qppo = train(c, "portfolio_qppo").front();
  c.algo = "ppo";
  const auto ppo = train(c, "portfolio_ppo").front();
  const double l1 = near(qppo.eval_mean_action, q_sol.weights);
  const double asset3 = ppo.eval_mean_action[2];
  r.details.push_back(fmt("qppo mean test allocation (%.3f %.3f %.3f), L1 to oracle %.3f (<= 0.35)",
                          qppo.eval_mean_action[0], qppo.eval_mean_action[1], qppo.eval_mean_action[2], l1));
  r.details.push_back(fmt("ppo mean test allocation (%.3f %.3f %.3f), asset 3 weight %.3f (>= 0.6)",
                          ppo.eval_mean_action[0], ppo.eval_mean_action[1], ppo.eval_mean_action[2], asset3));
  r.details.push_back(fmt("test 0.1-quantile / mean: qppo %.3f / %.3f, ppo %.3f / %.3f", qppo.eval_quantile,
                          qppo.eval_mean, ppo.eval_quantile, ppo.eval_mean));
  r.pass = oracle_ok && l1 <= 0.35 && asset3 >= 0.6;
  return r;
}

CriterionResult Suite::c7() {
  CriterionResult r{7, "inventory criterion ordering"};
  ExperimentConfig c = harness::preset("inventory_single");
  c.episodes = 10000;
  c.replications = 3;
  c.algo = "qppo";
  const auto qppo = train(c, "inventory_qppo");
  c.algo = "ppo";
  const auto ppo = train(c, "inventory_ppo");
  int wins = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const bool w = qppo[i].eval_quantile >= ppo[i].eval_quantile;
    wins += w ? 1 : 0;
    r.details.push_back(fmt("seed %zu: test 0.1-quantile qppo %.3f vs ppo %.3f (means %.3f / %.3f)", i,
                            qppo[i].eval_quantile, ppo[i].eval_quantile, qppo[i].eval_mean, ppo[i].eval_mean));
  }
  r.details.push_back(fmt("qppo >= ppo in %d of 3 seeds", wins));
  r.pass = wins >= 2;
  return r;
}

CriterionResult Suite::c8() {
  CriterionResult r{8, "MSE decay shape"};
  const std::vector<std::uint64_t> checkpoints{1000, 10000, 100000};
  std::vector<double> mse(3, 0.0);
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    Rng rng = make_stream(opt_.seed, rep, "toy");
    const auto trace = algos::run_toy_qpo(algos::ToySettings{}, checkpoints, rng);
    for (std::size_t i = 0; i < 3; ++i) mse[i] += trace.squared_error[i] / 100.0;
  }
  r.details.push_back(fmt("tracking MSE at k=1e3, 1e4, 1e5: %.3g, %.3g, %.3g", mse[0], mse[1], mse[2]));
  r.pass = mse[1] <= mse[0] && mse[2] <= mse[1];
  return r;
}

CriterionResult Suite::c9() {
  CriterionResult r{9, "determinism and invariants"};
  std::size_t failures = 0;
  auto tally = [&](const std::string& what, std::size_t bad, std::size_t total) {
    failures += bad;
    r.details.push_back(fmt("%s: %zu of %zu failed", what.c_str(), bad, total));
  };
  Rng rng = make_stream(opt_.seed, 0, "properties");

  {  // portfolio value accounting: reward is the value change and positions price to the value
    std::size_t bad = 0, total = 0;
    envs::PortfolioEnv env(envs::PortfolioConfig{.market = envs::MarketParams::imperfectly_hedgeable()});
    env.seed(derive_seed(opt_.seed, 0, "portfolio"));
    for (int ep = 0; ep < 20; ++ep) {
      env.reset();
      double sum = 0.0;
      for (bool done = false; !done;) {
        policy::Action a;
        double s = 0.0;
        for (int i = 0; i < 5; ++i) s += a.value.emplace_back(uniform01(rng) + 1e-3);
        for (double& x : a.value) x /= s;
        const double before = env.value();
        const auto step = env.step(a);
        sum += step.reward;
        const double v = envs::portfolio_value(env.positions(), env.prices());
        bad += std::abs(step.reward - (env.value() - before)) > 1e-9 * std::max(1.0, env.value()) ||
               std::abs(env.value() - v) > 1e-9 * std::max(1.0, v);
        ++total;
        done = step.done;
      }
      bad += std::abs(sum - (env.value() - env.config().initial_value)) > 1e-8 * env.value();
      ++total;
    }
    tally("portfolio value accounting", bad, total);
  }
  {  // inventory flow conservation and profit accounting
    std::size_t bad = 0, total = 0;
    const auto chain = envs::SupplyChainParams::multi_echelon();
    auto state = envs::initial_supply_state(chain);
    for (int t = 0; t < 2000; ++t) {
      std::vector<double> orders(3);
      for (double& q : orders) q = std::floor(uniform01(rng) * 21);
      const double demand = std::floor(uniform01(rng) * 21);
      std::vector<double> before = state.inventory, arriving(3);
      for (std::size_t i = 0; i < 3; ++i) arriving[i] = state.in_transit[i].front();
      const auto out = envs::inventory_step(chain, state, orders, demand);
      double profit = 0.0;
      for (double p : out.profit) profit += p;
      for (std::size_t i = 0; i < 3; ++i) {
        const double incoming = i == 0 ? demand : orders[i - 1];
        bad += out.shipped[i] + out.lost[i] != incoming || out.lost[i] < 0.0 ||
               out.inventory[i] != std::max(before[i] + arriving[i] - out.shipped[i], 0.0);
        ++total;
      }
      bad += out.shipped[3] != orders[2] || std::abs(out.reward - profit) > 1e-9 * std::max(1.0, std::abs(profit));
      ++total;
    }
    tally("inventory flow conservation", bad, total);
  }
  {  // rho(theta, theta) = 1 and clip pessimism
    std::size_t bad_ratio = 0, bad_clip = 0, total = 0;
    ExperimentConfig c = harness::preset("zero_mean_simple");
    auto env = harness::make_environment(c);
    env->seed(derive_seed(opt_.seed, 0, "ratio"));
    Rng init = make_stream(opt_.seed, 0, "ratio_init");
    const auto params = policy::PolicyParams::create(harness::make_policy_model(c, *env), init);
    for (int ep = 0; ep < 200; ++ep) {
      const auto traj = algos::rollout(*env, params, rng);
      for (std::size_t l = 1; l <= traj.length(); ++l) {
        bad_ratio += algos::importance_ratio(traj, l, params, params) != 1.0;
      }
      const double rho = std::exp(2.0 * standard_normal(rng));
      const double adv = 3.0 * standard_normal(rng);
      bad_clip += algos::clipped_surrogate(rho, adv, 0.2) > rho * adv + 1e-12;
      ++total;
    }
    tally("ratio identity rho(theta, theta) = 1 (all prefixes)", bad_ratio, total * 20);
    tally("clip pessimism", bad_clip, total);
  }
  {  // byte-identical reruns
    ExperimentConfig c = harness::preset("zero_mean_simple");
    c.episodes = 200;
    c.eval_episodes = 100;
    c.replications = 2;
    c.seed = opt_.seed;
    c.threads = opt_.threads;
    std::size_t bad = 0, total = 0;
    for (const char* algo : {"qpo", "qppo", "reinforce", "ppo", "spsa"}) {
      c.algo = algo;
      std::vector<std::string> runs[2];
      for (int k = 0; k < 2; ++k) {
        c.output_dir = (opt_.work_dir / ("rerun_" + std::string(algo) + "_" + std::to_string(k))).string();
        harness::run_experiment(c);
        for (int rep = 0; rep < 2; ++rep) {
          for (const char* f : {"metrics.csv", "checkpoint.json", "eval_returns.csv", "eval_summary.json"}) {
            runs[k].push_back(slurp(fs::path(c.output_dir) / ("rep_" + std::to_string(rep)) / f));
          }
        }
      }
      for (std::size_t i = 0; i < runs[0].size(); ++i) {
        bad += runs[0][i] != runs[1][i] || runs[0][i].empty();
        ++total;
      }
    }
    tally("byte-identical reruns (5 algorithms, 2 replications, 4 files)", bad, total);
  }
  if (!opt_.unit_test_dir.empty()) {
    std::size_t bad = 0, total = 0;
    for (const char* suite : {"test_autodiff", "test_policy", "test_quantile", "test_envs", "test_algos",
                              "test_oracles", "test_harness"}) {
      const fs::path exe = opt_.unit_test_dir / suite;
      ++total;
      if (!fs::exists(exe)) {
        ++bad;
        r.details.push_back(fmt("%s: missing", suite));
        continue;
      }
      const std::string cmd = "\"" + exe.string() + "\" --minimal > \"" +
                              (opt_.work_dir / (std::string(suite) + ".log")).string() + "\" 2>&1";
      const int code = std::system(cmd.c_str());
      if (code != 0) {
        ++bad;
        r.details.push_back(fmt("%s: failed (see %s.log in the work directory)", suite, suite));
      }
    }
    tally("module property suites", bad, total);
  }
  r.pass = failures == 0;
  return r;
}

}  // namespace

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options, std::ostream& out) {
  fs::create_directories(options.work_dir);
  Suite suite(options, out);
  const std::vector<std::function<CriterionResult()>> all = {
      [&] { return suite.c1(); }, [&] { return suite.c2(); }, [&] { return suite.c3(); },
      [&] { return suite.c4(); }, [&] { return suite.c5(); }, [&] { return suite.c6(); },
      [&] { return suite.c7(); }, [&] { return suite.c8(); }, [&] { return suite.c9(); }};
  std::vector<CriterionResult> results;
  for (int id = 1; id <= 9; ++id) {
    if (!options.only.empty() && std::find(options.only.begin(), options.only.end(), id) == options.only.end()) {
      continue;
    }
    out << "criterion " << id << " ..." << std::endl;
    const auto start = std::chrono::steady_clock::now();
    CriterionResult r;
    try {
      r = all[id - 1]();
    } catch (const std::exception& e) {
      r = CriterionResult{id, "error"};
      r.details.push_back(std::string("exception: ") + e.what());
    }
    r.id = id;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (const auto& d : r.details) out << "    " << d << '\n';
    out << (r.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << r.title << fmt(" (%.0fs)", r.seconds)
        << std::endl;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace qrl::verify
