#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "qrl/algos/trajectory.hpp"
#include "qrl/errors.hpp"
#include "qrl/harness/harness.hpp"
#include "qrl/order_statistics.hpp"

namespace qrl::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Shortest text that reads back to the same double.
std::string num(double x) {
  if (std::isnan(x)) return "";
  char buf[32];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

json json_num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

std::vector<double> mean_action_of(const algos::Trajectory& traj) {
  std::vector<double> sum;
  for (const auto& a : traj.actions) {
    const std::size_t n = a.value.empty() ? a.discrete.size() : a.value.size();
    if (sum.empty()) sum.assign(n, 0.0);
    for (std::size_t i = 0; i < n && i < sum.size(); ++i) {
      sum[i] += a.value.empty() ? static_cast<double>(a.discrete[i]) : a.value[i];
    }
  }
  for (double& s : sum) s /= static_cast<double>(std::max<std::size_t>(traj.actions.size(), 1));
  return sum;
}

}  // namespace

RollingStats rolling_stats(std::span<const double> window, double alpha) {
  return {empirical_quantile(window, alpha), mean_of(window)};
}

double silverman_bandwidth(std::span<const double> samples) {
  const double n = static_cast<double>(samples.size());
  return 1.06 * stddev_of(samples) * std::pow(n, -0.2);
}

KdeHint emit_kde_data(std::span<const double> returns, const fs::path& path) {
  if (returns.size() < 2) throw UsageError("KDE data needs at least two samples");
  KdeHint hint;
  hint.bandwidth = silverman_bandwidth(returns);
  hint.degenerate = !(hint.bandwidth > 0.0);
  if (hint.degenerate) hint.bandwidth = 0.0;
  std::string text = "return,bandwidth,degenerate\n";
  const std::string tail = "," + num(hint.bandwidth) + "," + (hint.degenerate ? "1" : "0") + "\n";
  for (double r : returns) text += num(r) + tail;
  write_text(path, text);
  return hint;
}

Evaluation evaluate_policy(envs::Environment& env, const policy::PolicyParams& params, double discount,
                           std::size_t episodes) {
  Evaluation ev;
  ev.returns.reserve(episodes);
  Rng unused(0);
  std::size_t correct = 0, judged = 0, steps = 0;
  for (std::size_t e = 0; e < episodes; ++e) {
    algos::Trajectory traj = algos::rollout(env, params, unused, true);
    ev.returns.push_back(traj.discounted_return(discount));
    correct += traj.correct;
    judged += traj.judged;
    const auto m = mean_action_of(traj);
    if (ev.mean_action.empty()) ev.mean_action.assign(m.size(), 0.0);
    for (std::size_t i = 0; i < m.size() && i < ev.mean_action.size(); ++i) {
      ev.mean_action[i] += m[i] * static_cast<double>(traj.length());
    }
    steps += traj.length();
  }
  for (double& v : ev.mean_action) v /= static_cast<double>(std::max<std::size_t>(steps, 1));
  ev.accuracy = judged ? static_cast<double>(correct) / static_cast<double>(judged) : kNaN;
  return ev;
}

void write_eval_returns(const fs::path& path, std::span<const double> returns) {
  std::string text = "episode,return\n";
  for (std::size_t i = 0; i < returns.size(); ++i) text += std::to_string(i + 1) + "," + num(returns[i]) + "\n";
  write_text(path, text);
}

ReplicationSummary run_replication(const ExperimentConfig& cfg, std::size_t rep, const fs::path& dir) {
  const auto started = std::chrono::steady_clock::now();
  fs::create_directories(dir);
  const std::uint64_t seed = cfg.seed;

  auto env = make_environment(cfg);
  env->seed(derive_seed(seed, rep, "env"));
  const std::size_t T = env->horizon();
  auto model = make_policy_model(cfg, *env);
  Rng init = make_stream(seed, rep, "init");
  auto agent = algos::make_agent(cfg.algo, model, T, cfg.agent, init);
  algos::Streams streams{make_stream(seed, rep, "policy"), make_stream(seed, rep, "shuffle")};
  const double bound = static_cast<double>(T) * model->score_bound();

  ReplicationSummary s;
  s.replication = rep;
  s.directory = dir;
  s.final_rolling_quantile = s.final_rolling_mean = s.final_accuracy = kNaN;
  s.final_tracker = agent->tracker_value();

  std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
  if (!metrics) throw ConfigError("cannot write '" + (dir / "metrics.csv").string() + "'");
  metrics << "episode,rolling_quantile,rolling_mean,accuracy,q_tracker\n";

  if (cfg.episodes > 0) agent->warm_start(*env, streams);
  std::deque<double> returns, accuracies;
  std::vector<double> scratch;
  for (std::size_t e = 1; e <= cfg.episodes; ++e) {
    const algos::EpisodeReport r = agent->train_episode(*env, streams);
    if (r.direction_norm > bound * (1.0 + 1e-12)) ++s.norm_violations;
    s.max_direction_ratio = std::max(s.max_direction_ratio, r.direction_norm / bound);
    returns.push_back(r.episode_return);
    if (returns.size() > cfg.window) returns.pop_front();
    if (!std::isnan(r.accuracy)) {
      accuracies.push_back(r.accuracy);
      if (accuracies.size() > cfg.window) accuracies.pop_front();
    }
    scratch.assign(returns.begin(), returns.end());
    const RollingStats st = rolling_stats(scratch, cfg.agent.alpha);
    double acc = kNaN;
    if (!accuracies.empty()) {
      scratch.assign(accuracies.begin(), accuracies.end());
      acc = mean_of(scratch);
    }
    metrics << e << ',' << num(st.quantile) << ',' << num(st.mean) << ',' << num(acc) << ',' << num(r.tracker)
            << '\n';
    s.final_rolling_quantile = st.quantile;
    s.final_rolling_mean = st.mean;
    s.final_accuracy = acc;
    s.final_tracker = r.tracker;
  }
  metrics.close();
  s.episodes = cfg.episodes;

  // placement and thread count do not affect results, so they stay out of the checkpoint
  json run_config = to_json(cfg);
  run_config.erase("output_dir");
  run_config.erase("threads");
  json checkpoint = {{"schema_version", kSchemaVersion},
                     {"config", run_config},
                     {"replication", rep},
                     {"episodes", cfg.episodes},
                     {"policy", ad::make_snapshot(model->network(), agent->policy().theta)},
                     {"tracker", agent->tracker_json()}};
  write_text(dir / "checkpoint.json", checkpoint.dump(1) + "\n");

  if (cfg.eval_episodes > 0) {
    auto eval_env = make_environment(cfg);
    eval_env->seed(derive_seed(seed, rep, "eval_env"));
    const Evaluation ev = evaluate_policy(*eval_env, agent->policy(), cfg.agent.discount, cfg.eval_episodes);
    write_eval_returns(dir / "eval_returns.csv", ev.returns);
    s.eval_quantile = empirical_quantile(ev.returns, cfg.agent.alpha);
    s.eval_mean = mean_of(ev.returns);
    s.eval_accuracy = ev.accuracy;
    s.eval_mean_action = ev.mean_action;
    json summary = {{"episodes", ev.returns.size()},
                    {"alpha", cfg.agent.alpha},
                    {"quantile", s.eval_quantile},
                    {"mean", s.eval_mean},
                    {"accuracy", json_num(ev.accuracy)},
                    {"mean_action", ev.mean_action}};
    if (ev.returns.size() >= 2) {
      const KdeHint hint = emit_kde_data(ev.returns, dir / "kde.csv");
      summary["kde_bandwidth"] = hint.bandwidth;
      summary["kde_degenerate"] = hint.degenerate;
    }
    write_text(dir / "eval_summary.json", summary.dump(1) + "\n");
  } else {
    s.eval_quantile = s.eval_mean = s.eval_accuracy = kNaN;
  }
  s.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return s;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  ExperimentResult result;
  result.directory = cfg.output_dir;
  result.config_hash = config_hash(cfg);
  fs::create_directories(result.directory);
  result.replications.resize(cfg.replications);

  std::size_t workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, cfg.replications);
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(cfg.replications);
  auto work = [&] {
    for (std::size_t rep; (rep = next.fetch_add(1)) < cfg.replications;) {
      try {
        result.replications[rep] = run_replication(cfg, rep, result.directory / ("rep_" + std::to_string(rep)));
      } catch (...) {
        errors[rep] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }

  json reps = json::array();
  for (const auto& s : result.replications) {
    reps.push_back({{"replication", s.replication},
                    {"directory", s.directory.filename().string()},
                    {"episodes", s.episodes},
                    {"final_rolling_quantile", json_num(s.final_rolling_quantile)},
                    {"final_rolling_mean", json_num(s.final_rolling_mean)},
                    {"final_accuracy", json_num(s.final_accuracy)},
                    {"final_tracker", json_num(s.final_tracker)},
                    {"eval_quantile", json_num(s.eval_quantile)},
                    {"eval_mean", json_num(s.eval_mean)},
                    {"norm_violations", s.norm_violations},
                    {"wall_clock_seconds", s.wall_clock_seconds}});
  }
  json manifest = {{"schema_version", kSchemaVersion},
                   {"version", kVersion},
                   {"config_hash", result.config_hash},
                   {"config", to_json(cfg)},
                   {"replications", reps}};
  write_text(result.directory / "manifest.json", manifest.dump(1) + "\n");
  return result;
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object() || !j.contains("config") || !j.contains("policy")) {
    throw ConfigError("checkpoint '" + path.string() + "' lacks config or policy");
  }
  Checkpoint c;
  c.config = config_from_json(j.at("config"));
  c.replication = j.value("replication", std::size_t{0});
  c.episodes = j.value("episodes", std::size_t{0});
  auto env = make_environment(c.config);
  c.params.model = make_policy_model(c.config, *env);
  c.params.theta = ad::restore_snapshot(c.params.model->network(), j.at("policy"));
  c.tracker = j.value("tracker", json(nullptr));
  return c;
}

std::vector<double> load_eval_returns(const fs::path& dir) {
  auto read = [](const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open '" + file.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line != "episode,return") throw ConfigError("'" + file.string() + "' has an unexpected header");
    std::vector<double> out;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw ConfigError("malformed row in '" + file.string() + "': " + line);
      try {
        out.push_back(std::stod(line.substr(comma + 1)));
      } catch (const std::exception&) {
        throw ConfigError("malformed row in '" + file.string() + "': " + line);
      }
    }
    return out;
  };
  if (fs::is_regular_file(dir)) return read(dir);
  if (!fs::is_directory(dir)) throw ConfigError("'" + dir.string() + "' is not a directory");
  if (fs::exists(dir / "eval_returns.csv")) return read(dir / "eval_returns.csv");
  std::vector<std::pair<std::size_t, fs::path>> reps;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_directory() && name.rfind("rep_", 0) == 0 && fs::exists(entry.path() / "eval_returns.csv")) {
      reps.emplace_back(std::stoul(name.substr(4)), entry.path() / "eval_returns.csv");
    }
  }
  if (reps.empty()) throw ConfigError("no eval_returns.csv under '" + dir.string() + "'");
  std::sort(reps.begin(), reps.end());
  std::vector<double> out;
  for (const auto& [idx, file] : reps) {
    auto part = read(file);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

RunColumn summarize_returns(std::string label, std::span<const double> returns, double alpha, std::size_t resamples,
                            double confidence, std::uint64_t seed) {
  if (returns.empty()) throw ConfigError("run '" + label + "' has no evaluation returns");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence must lie in (0, 1)");
  if (resamples < 2) throw ConfigError("at least two bootstrap resamples are needed");
  RunColumn col;
  col.label = std::move(label);
  col.samples = returns.size();
  col.quantile = empirical_quantile(returns, alpha);
  col.mean = mean_of(returns);

  Rng rng = make_stream(seed, 0, "bootstrap");
  const std::size_t n = returns.size();
  std::vector<double> qs, ms, draw(n);
  qs.reserve(resamples);
  ms.reserve(resamples);
  for (std::size_t b = 0; b < resamples; ++b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto idx = std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
      draw[i] = returns[idx];
      sum += draw[i];
    }
    ms.push_back(sum / static_cast<double>(n));
    qs.push_back(empirical_quantile_inplace(draw, alpha));
  }
  const double tail = (1.0 - confidence) / 2.0;
  auto interval = [&](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    return Interval{empirical_quantile(v, tail), empirical_quantile(v, 1.0 - tail)};
  };
  col.quantile_ci = interval(qs);
  col.mean_ci = interval(ms);
  return col;
}

CompareReport compare_runs(const fs::path& a, const fs::path& b, double alpha, std::size_t resamples,
                           double confidence, std::uint64_t seed) {
  CompareReport r;
  r.alpha = alpha;
  r.confidence = confidence;
  const auto ra = load_eval_returns(a);
  const auto rb = load_eval_returns(b);
  r.a = summarize_returns(a.string(), ra, alpha, resamples, confidence, seed);
  r.b = summarize_returns(b.string(), rb, alpha, resamples, confidence, seed);
  return r;
}

std::string format_report(const CompareReport& r) {
  char head[160];
  std::snprintf(head, sizeof head, "%-28s %8s %32s %32s\n", "run", "n", ("q" + num(r.alpha) + " [CI]").c_str(),
                "mean [CI]");
  std::string out = head;
  for (const RunColumn* c : {&r.a, &r.b}) {
    char line[256];
    char q[64], m[64];
    std::snprintf(q, sizeof q, "%.4f [%.4f, %.4f]", c->quantile, c->quantile_ci.lo, c->quantile_ci.hi);
    std::snprintf(m, sizeof m, "%.4f [%.4f, %.4f]", c->mean, c->mean_ci.lo, c->mean_ci.hi);
    std::string label = c->label.size() > 28 ? "..." + c->label.substr(c->label.size() - 25) : c->label;
    std::snprintf(line, sizeof line, "%-28s %8zu %32s %32s\n", label.c_str(), c->samples, q, m);
    out += line;
  }
  char foot[96];
  std::snprintf(foot, sizeof foot, "%.0f%% percentile bootstrap intervals\n", 100.0 * r.confidence);
  return out + foot;
}

json to_json(const CompareReport& r) {
  auto col = [](const RunColumn& c) {
    return json{{"label", c.label},
                {"samples", c.samples},
                {"quantile", c.quantile},
                {"quantile_ci", {c.quantile_ci.lo, c.quantile_ci.hi}},
                {"mean", c.mean},
                {"mean_ci", {c.mean_ci.lo, c.mean_ci.hi}}};
  };
  return {{"alpha", r.alpha}, {"confidence", r.confidence}, {"a", col(r.a)}, {"b", col(r.b)}};
}

}  // namespace qrl::harness
