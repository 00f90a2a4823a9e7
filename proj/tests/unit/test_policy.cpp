#include <doctest.h>

#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "qrl/errors.hpp"
#include "qrl/policy/baseline.hpp"
#include "qrl/policy/policy.hpp"

using namespace qrl;
using namespace qrl::policy;

namespace {

std::shared_ptr<const PolicyModel> linear_model(std::size_t in, ActionSpec spec, double score_bound = 1e3) {
  ad::Architecture arch;
  arch.input_dim = in;
  return std::make_shared<const PolicyModel>(arch, spec, 1e3, score_bound);
}

std::shared_ptr<const PolicyModel> mlp_model(std::size_t in, ActionSpec spec) {
  return std::make_shared<const PolicyModel>(ad::Architecture::mlp(in, {5, 4}, 1), spec);
}

std::vector<double> fd_log_density(PolicyParams p, const std::vector<double>& s, const Action& a) {
  const double h = 1e-5;
  std::vector<double> out(p.theta.size());
  for (std::size_t i = 0; i < p.theta.size(); ++i) {
    const double keep = p.theta[i];
    p.theta[i] = keep + h;
    const double up = log_density(p, s, a);
    p.theta[i] = keep - h;
    const double down = log_density(p, s, a);
    p.theta[i] = keep;
    out[i] = (up - down) / (2 * h);
  }
  return out;
}

}  // namespace

TEST_CASE("act on a categorical head") {
  auto model = linear_model(3, ActionSpec::categorical(3));
  PolicyParams p{model, std::vector<double>(model->parameter_count(), 0.0)};
  Rng rng(1);
  SUBCASE("equal logits give log(1/3) for every draw") {
    for (int k = 0; k < 20; ++k) {
      const auto r = act(p, std::vector<double>{0.3, -1.0, 2.0}, rng);
      CHECK(r.log_density == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-14));
    }
  }
  SUBCASE("wrong state width is rejected") {
    CHECK_THROWS_AS(act(p, std::vector<double>{1.0}, rng), ConfigError);
  }
  SUBCASE("empirical frequencies match softmax of the logits within 3 standard errors") {
    Rng init(4);
    PolicyParams q = PolicyParams::create(model, init);
    const std::vector<double> s{0.5, -0.2, 0.9};
    const auto probs = softmax(model->head_outputs(q.theta, s)[0]);
    const int n = 100000;
    std::vector<int> counts(3, 0);
    for (int k = 0; k < n; ++k) ++counts[act(q, s, rng).action.discrete[0]];
    for (std::size_t i = 0; i < 3; ++i) {
      const double phat = static_cast<double>(counts[i]) / n;
      const double se = std::sqrt(probs[i] * (1 - probs[i]) / n);
      CHECK(std::abs(phat - probs[i]) <= 3 * se);
    }
  }
}

TEST_CASE("simplex actions lie on the simplex") {
  auto model = mlp_model(2, ActionSpec::simplex(2));
  Rng init(3);
  auto p = PolicyParams::create(model, init);
  Rng rng(5);
  for (int k = 0; k < 100; ++k) {
    const auto r = act(p, std::vector<double>{0.1, 0.7}, rng);
    const auto& a = r.action.value;
    REQUIRE(a.size() == 2);
    CHECK(a[0] >= 0.0);
    CHECK(a[1] >= 0.0);
    CHECK(std::abs(a[0] + a[1] - 1.0) <= 1e-9);
    CHECK(r.log_density == doctest::Approx(log_density(p, std::vector<double>{0.1, 0.7}, r.action)).epsilon(1e-12));
  }
  const Action mode = mode_action(p, std::vector<double>{0.1, 0.7});
  CHECK(std::abs(mode.value[0] + mode.value[1] - 1.0) <= 1e-12);
}

TEST_CASE("categorical probabilities sum to one for extreme logits") {
  const std::vector<std::vector<double>> cases{{0.0, 0.0}, {800.0, -800.0, 3.0}, {-1e3, -1e3 + 1e-9}, {1e-300, 5.0, 7.5, -2.0}};
  for (const auto& logits : cases) {
    const auto p = softmax(logits);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-12);
  }
}

TEST_CASE("score function") {
  SUBCASE("equal-logit categorical: d log pi(a) / d logit_a = 1 - 1/n") {
    auto model = linear_model(2, ActionSpec::categorical(4));
    PolicyParams p{model, std::vector<double>(model->parameter_count(), 0.0)};
    Action a{.discrete = {2}};
    const auto g = score(p, std::vector<double>{0.0, 0.0}, a);
    const auto& bias = model->network().layout().at("head0.bias");
    CHECK(g[bias.offset + 2] == doctest::Approx(1.0 - 1.0 / 4.0).epsilon(1e-14));
    CHECK(g[bias.offset + 0] == doctest::Approx(-1.0 / 4.0).epsilon(1e-14));
  }
  SUBCASE("matches finite differences of log pi for every head kind") {
    Rng rng(21);
    const std::vector<ActionSpec> specs{ActionSpec::categorical(3), ActionSpec::multi_discrete(4, 3),
                                        ActionSpec::simplex(3), ActionSpec::gaussian(2, -0.3, true)};
    for (const auto& spec : specs) {
      auto model = mlp_model(3, spec);
      auto p = PolicyParams::create(model, rng);
      for (int trial = 0; trial < 3; ++trial) {
        const std::vector<double> s{0.4 * trial - 0.5, 0.3, -0.8};
        const Action a = act(p, s, rng).action;
        const auto g = score(p, s, a);
        const auto fd = fd_log_density(p, s, a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double scale = std::max({std::abs(g[i]), std::abs(fd[i]), 1e-3});
          CHECK(std::abs(g[i] - fd[i]) <= 1e-4 * scale);
        }
      }
    }
  }
  SUBCASE("norm never exceeds the configured bound") {
    auto model = linear_model(3, ActionSpec::categorical(3), 0.05);
    Rng rng(8);
    auto p = PolicyParams::create(model, rng);
    for (int k = 0; k < 50; ++k) {
      const std::vector<double> s{uniform01(rng) * 10, -5.0, 3.0};
      const auto g = score(p, s, act(p, s, rng).action);
      double n2 = 0;
      for (double x : g) n2 += x * x;
      CHECK(std::sqrt(n2) <= 0.05 + 1e-12);
    }
  }
  SUBCASE("infeasible actions are usage errors") {
    auto model = linear_model(2, ActionSpec::categorical(3));
    PolicyParams p{model, std::vector<double>(model->parameter_count(), 0.0)};
    CHECK_THROWS_AS(score(p, std::vector<double>{0, 0}, Action{.discrete = {3}}), UsageError);
    CHECK_THROWS_AS(score(p, std::vector<double>{0, 0}, Action{.discrete = {0, 1}}), UsageError);
  }
}

TEST_CASE("score has mean zero under the policy") {
  auto model = linear_model(2, ActionSpec::categorical(3));
  Rng rng(99);
  auto p = PolicyParams::create(model, rng);
  const std::vector<double> s{0.7, -0.4};
  const int n = 100000;
  const std::size_t m = model->parameter_count();
  std::vector<double> sum(m, 0.0), sum2(m, 0.0);
  for (int k = 0; k < n; ++k) {
    const auto g = score(p, s, act(p, s, rng).action);
    for (std::size_t i = 0; i < m; ++i) {
      sum[i] += g[i];
      sum2[i] += g[i] * g[i];
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double mean = sum[i] / n;
    const double se = std::sqrt(std::max(sum2[i] / n - mean * mean, 0.0) / n);
    CHECK(std::abs(mean) <= 3 * se + 1e-12);
  }
}

TEST_CASE("projection onto the parameter box") {
  auto model = std::make_shared<const PolicyModel>(ad::Architecture::mlp(1, {}, 1), ActionSpec::categorical(2), 2.0);
  PolicyParams inside{model, {0.5, -1.0, 1.9, 0.0}};
  CHECK(project(inside).theta == inside.theta);
  PolicyParams outside{model, {3.0, -1.0, -7.0, 2.0}};
  CHECK(project(outside).theta == std::vector<double>{2.0, -1.0, -2.0, 2.0});

  Rng rng(6);
  std::normal_distribution<double> wide(0.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    PolicyParams x{model, std::vector<double>(4)};
    PolicyParams y{model, std::vector<double>(4)};
    for (std::size_t i = 0; i < 4; ++i) {
      x.theta[i] = wide(rng);
      y.theta[i] = wide(rng);
    }
    const auto px = project(x);
    CHECK(project(px).theta == px.theta);
    const auto py = project(y);
    double before = 0, after = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      before = std::max(before, std::abs(x.theta[i] - y.theta[i]));
      after = std::max(after, std::abs(px.theta[i] - py.theta[i]));
    }
    CHECK(after <= before);
  }
}

TEST_CASE("baseline network") {
  Rng rng(12);
  BaselineNet net(2, {8}, 20, ad::AdamConfig{.learning_rate = 0.01}, rng);

  SUBCASE("zero weights predict zero") {
    std::fill(net.weights().begin(), net.weights().end(), 0.0);
    CHECK(baseline_eval(net, std::vector<double>{1.0, -3.0}, 17) == 0.0);
  }
  SUBCASE("outputs are finite over a grid") {
    for (double a = -5; a <= 5; a += 0.5) {
      for (std::size_t l = 16; l <= 20; ++l) CHECK(std::isfinite(baseline_eval(net, std::vector<double>{a, -a}, l)));
    }
  }
  SUBCASE("regression on a constant target converges to it") {
    std::vector<BaselineSample> batch;
    for (std::size_t l = 16; l <= 20; ++l) batch.push_back({{0.5, -0.25}, l, -0.5});
    for (int k = 0; k < 1000; ++k) baseline_fit(net, batch);
    for (std::size_t l = 16; l <= 20; ++l) CHECK(std::abs(baseline_eval(net, batch[0].s0, l) + 0.5) <= 0.05);
  }
  SUBCASE("loss strictly decreases over 100 steps on identical rows") {
    BaselineNet slow(2, {8}, 20, ad::AdamConfig{.learning_rate = 1e-3}, rng);
    std::vector<BaselineSample> batch(6, BaselineSample{{1.0, 2.0}, 18, -0.8});
    double previous = baseline_fit(slow, batch);
    bool decreasing = true;
    for (int k = 0; k < 100; ++k) {
      const double loss = baseline_fit(slow, batch);
      decreasing = decreasing && loss < previous;
      previous = loss;
    }
    CHECK(decreasing);
  }
  SUBCASE("targets equal to predictions leave the weights unchanged") {
    std::vector<BaselineSample> batch;
    for (int k = 0; k < 4; ++k) {
      std::vector<double> s0{0.1 * k, -0.2 * k};
      const double pred = baseline_eval(net, s0, 16 + k);
      batch.push_back({s0, static_cast<std::size_t>(16 + k), pred});
    }
    const auto before = net.weights();
    baseline_fit(net, batch);
    CHECK(net.weights() == before);
  }
  SUBCASE("empty batch is a no-op") {
    const auto before = net.weights();
    CHECK(baseline_fit(net, {}) == 0.0);
    CHECK(net.weights() == before);
  }
  SUBCASE("fit beats the constant predictor on held-out data") {
    auto target_of = [](const std::vector<double>& s0, std::size_t l) {
      return -1.0 / (1.0 + std::exp(-2.0 * s0[0] + 0.1 * static_cast<double>(l) - 1.8));
    };
    auto draw = [&](int n) {
      std::vector<BaselineSample> out;
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (int k = 0; k < n; ++k) {
        std::vector<double> s0{u(rng), u(rng)};
        const std::size_t l = 16 + static_cast<std::size_t>(k % 5);
        out.push_back({s0, l, target_of(s0, l)});
      }
      return out;
    };
    const auto train = draw(200);
    const auto held_out = draw(200);
    double train_mean = 0;
    for (const auto& s : train) train_mean += s.target / static_cast<double>(train.size());
    for (int k = 0; k < 600; ++k) baseline_fit(net, train);
    double mse_net = 0, mse_const = 0;
    for (const auto& s : held_out) {
      const double pred = baseline_eval(net, s.s0, s.horizon);
      mse_net += (pred - s.target) * (pred - s.target);
      mse_const += (train_mean - s.target) * (train_mean - s.target);
    }
    CHECK(mse_net < 0.5 * mse_const);
  }
}
