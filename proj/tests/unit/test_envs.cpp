#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "qrl/envs/inventory.hpp"
#include "qrl/envs/portfolio.hpp"
#include "qrl/envs/tabular.hpp"
#include "qrl/envs/zero_mean.hpp"
#include "qrl/errors.hpp"
#include "qrl/order_statistics.hpp"

using namespace qrl;
using namespace qrl::envs;

namespace {

policy::Action pick(std::size_t i) { return policy::Action{{i}, {}, {}}; }

policy::Action alloc(std::vector<double> a) { return policy::Action{{}, a, a}; }

std::size_t argmin(const std::vector<double>& s) {
  return static_cast<std::size_t>(std::min_element(s.begin(), s.end()) - s.begin());
}

std::size_t argmax(const std::vector<double>& s) {
  return static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
}

template <class Choose>
std::vector<double> zero_mean_returns(std::size_t episodes, std::uint64_t seed, Choose choose) {
  auto env = ZeroMeanEnv::simple();
  env.seed(seed);
  std::vector<double> out;
  out.reserve(episodes);
  for (std::size_t e = 0; e < episodes; ++e) {
    auto s = env.reset();
    double total = 0.0;
    for (bool done = false; !done;) {
      auto r = env.step(pick(choose(s, env.rng())));
      total += r.reward;
      s = r.observation;
      done = r.done;
    }
    out.push_back(total);
  }
  return out;
}

}  // namespace

TEST_CASE("zero-mean environment") {
  SUBCASE("state stays a permutation of the supports") {
    auto env = ZeroMeanEnv::simple();
    env.seed(1);
    auto s = env.reset();
    for (int t = 0; t < 20; ++t) {
      auto sorted = s;
      std::sort(sorted.begin(), sorted.end());
      CHECK(sorted == std::vector<double>{1, 4, 9});
      s = env.step(pick(t % 3)).observation;
    }
  }
  SUBCASE("any fixed policy has zero mean return") {
    for (int which = 0; which < 3; ++which) {
      auto returns = zero_mean_returns(100000, 7 + which, [which](const std::vector<double>& s, Rng& rng) {
        if (which == 0) return argmin(s);
        if (which == 1) return argmax(s);
        return static_cast<std::size_t>(uniform01(rng) * 3.0) % 3;
      });
      const double se = stddev_of(returns) / std::sqrt(static_cast<double>(returns.size()));
      CHECK(std::abs(mean_of(returns)) < 3.0 * se);
    }
  }
  SUBCASE("argmin rewards lie in [-1, 1] and count as correct") {
    auto env = ZeroMeanEnv::simple();
    env.seed(2);
    auto s = env.reset();
    for (int t = 0; t < 20; ++t) {
      auto r = env.step(pick(argmin(s)));
      CHECK(std::abs(r.reward) <= 1.0);
      CHECK(r.correct == true);
      s = r.observation;
    }
  }
  SUBCASE("argmin has the better lower quantile") {
    auto lo = zero_mean_returns(100000, 3, [](const std::vector<double>& s, Rng&) { return argmin(s); });
    auto hi = zero_mean_returns(100000, 4, [](const std::vector<double>& s, Rng&) { return argmax(s); });
    CHECK(empirical_quantile(lo, 0.25) > empirical_quantile(hi, 0.25));
  }
  SUBCASE("errors") {
    auto env = ZeroMeanEnv::simple();
    env.reset();
    CHECK_THROWS_AS(env.step(pick(3)), UsageError);
    CHECK_THROWS_AS(ZeroMeanEnv({1.0}, 20), ConfigError);
    CHECK(env.reward_bound() == 9.0);
  }
}

TEST_CASE("price process") {
  const auto market = MarketParams::perfectly_hedgeable();
  const std::vector<double> p0{1.0, 2.0, 0.5};
  const double dt = 0.01;
  SUBCASE("zero shock is pure drift") {
    const auto p = gbm_step(p0, market, dt, std::vector<double>{0, 0, 0});
    for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx((1 + market.drift[i] * dt) * p0[i]));
  }
  SUBCASE("mean and covariance of one step") {
    Rng rng(5);
    const int n = 100000;
    std::vector<std::vector<double>> m(n);
    std::vector<double> mean(3, 0.0), sq(3, 0.0);
    for (int k = 0; k < n; ++k) {
      const auto p = gbm_step(p0, market, dt, rng);
      m[k].resize(3);
      for (std::size_t i = 0; i < 3; ++i) {
        mean[i] += p[i];
        sq[i] += p[i] * p[i];
        m[k][i] = (p[i] - p0[i]) / p0[i];
      }
    }
    for (std::size_t i = 0; i < 3; ++i) {
      const double mu = mean[i] / n;
      const double se = std::sqrt((sq[i] / n - mu * mu) / n);
      CHECK(std::abs(mu - (1 + market.drift[i] * dt) * p0[i]) < 3 * se);
    }
    // Covariance of margins against vol_root vol_root^T dt; checked on the nonzero entries.
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        double expect = 0.0;
        for (std::size_t k = 0; k < 3; ++k) expect += market.vol_root[i * 3 + k] * market.vol_root[j * 3 + k];
        expect *= dt;
        double mi = 0, mj = 0, c = 0;
        for (const auto& r : m) {
          mi += r[i];
          mj += r[j];
        }
        mi /= n;
        mj /= n;
        for (const auto& r : m) c += (r[i] - mi) * (r[j] - mj);
        c /= n - 1;
        if (expect == 0.0) {
          CHECK(std::abs(c) < 1e-6);
        } else {
          CHECK(std::abs(c - expect) <= 0.05 * std::abs(expect));
        }
      }
    }
  }
  SUBCASE("prices stay positive under huge shocks") {
    const auto p = gbm_step(p0, market, dt, std::vector<double>{0.0, -1e6, 1e6});
    for (double x : p) CHECK(x > 0.0);
  }
}

TEST_CASE("rebalancing") {
  SUBCASE("selling everything into the other asset pays the fee on the purchase") {
    const auto w = rebalance_positions(std::vector<double>{100, 0}, std::vector<double>{1, 1},
                                       std::vector<double>{0, 1}, 0.001);
    CHECK(w[0] == doctest::Approx(0.0));
    CHECK(w[1] == doctest::Approx(99.9));
  }
  SUBCASE("current weights mean no trade") {
    const std::vector<double> w{10, 20, 5}, p{1.5, 0.5, 2.0};
    const double v = portfolio_value(w, p);
    std::vector<double> a(3);
    for (std::size_t i = 0; i < 3; ++i) a[i] = w[i] * p[i] / v;
    const auto next = rebalance_positions(w, p, a, 0.001);
    for (std::size_t i = 0; i < 3; ++i) CHECK(next[i] == doctest::Approx(w[i]).epsilon(1e-12));
  }
  SUBCASE("zero fee conserves value") {
    Rng rng(3);
    for (int k = 0; k < 100; ++k) {
      std::vector<double> w(3), p(3), a(3);
      for (std::size_t i = 0; i < 3; ++i) {
        w[i] = 50 * uniform01(rng);
        p[i] = 0.1 + uniform01(rng);
        a[i] = uniform01(rng);
      }
      const double total = a[0] + a[1] + a[2];
      for (double& x : a) x /= total;
      const auto next = rebalance_positions(w, p, a, 0.0);
      CHECK(portfolio_value(next, p) == doctest::Approx(portfolio_value(w, p)).epsilon(1e-12));
    }
  }
  SUBCASE("off-simplex allocations are rejected") {
    CHECK_THROWS_AS(rebalance_positions(std::vector<double>{1, 1}, std::vector<double>{1, 1},
                                        std::vector<double>{0.5, 0.6}, 0.0),
                    UsageError);
  }
}

TEST_CASE("portfolio environment accounting") {
  for (auto market : {MarketParams::perfectly_hedgeable(), MarketParams::imperfectly_hedgeable()}) {
    PortfolioEnv env(PortfolioConfig{.market = market});
    env.seed(9);
    auto obs = env.reset();
    CHECK(obs.size() == env.observation_width());
    CHECK(env.value() == doctest::Approx(100.0));
    Rng rng(4);
    double total = 0.0;
    for (bool done = false; !done;) {
      std::vector<double> a(market.assets());
      for (double& x : a) x = uniform01(rng);
      const double s = std::accumulate(a.begin(), a.end(), 0.0);
      for (double& x : a) x /= s;
      const double before = env.value();
      auto r = env.step(alloc(a));
      total += r.reward;
      const double v = portfolio_value(env.positions(), env.prices());
      CHECK(std::abs(env.value() - v) <= 1e-9 * std::abs(v));
      CHECK(r.reward == doctest::Approx(env.value() - before));
      for (double w : env.positions()) CHECK(w >= 0.0);
      for (double p : env.prices()) CHECK(p > 0.0);
      done = r.done;
    }
    CHECK(total == doctest::Approx(env.value() - 100.0));
  }
}

TEST_CASE("supply chain dynamics") {
  const auto single = SupplyChainParams::single_echelon();
  SUBCASE("hand-evaluated period") {
    auto state = initial_supply_state(single);
    const auto out = inventory_step(single, state, {5.0}, 4.0);
    CHECK(out.shipped[0] == 4.0);
    CHECK(out.lost[0] == 0.0);
    CHECK(out.inventory[0] == 6.0);
    CHECK(out.reward == doctest::Approx(-0.4));
  }
  SUBCASE("demand above stock is lost") {
    auto state = initial_supply_state(single);
    const auto out = inventory_step(single, state, {0.0}, 20.0);
    CHECK(out.shipped[0] == 10.0);
    CHECK(out.lost[0] == 10.0);
    CHECK(out.inventory[0] == 0.0);
  }
  SUBCASE("an empty chain earns nothing") {
    auto params = single;
    params.initial_inventory = {0.0};
    auto state = initial_supply_state(params);
    CHECK(inventory_step(params, state, {0.0}, 0.0).reward == 0.0);
  }
  SUBCASE("orders arrive after the lead time") {
    auto state = initial_supply_state(single);
    inventory_step(single, state, {7.0}, 0.0);
    for (int k = 0; k < 2; ++k) inventory_step(single, state, {0.0}, 0.0);
    CHECK(state.inventory[0] == 10.0);
    inventory_step(single, state, {0.0}, 0.0);
    CHECK(state.inventory[0] == 17.0);
  }
  SUBCASE("flow conservation on random multi-echelon runs") {
    const auto multi = SupplyChainParams::multi_echelon();
    Rng rng(12);
    auto state = initial_supply_state(multi);
    for (int t = 0; t < 500; ++t) {
      std::vector<double> orders(3);
      for (double& q : orders) q = std::floor(uniform01(rng) * 21);
      const double demand = std::floor(uniform01(rng) * 21);
      std::vector<double> before = state.inventory, arriving(3);
      for (std::size_t i = 0; i < 3; ++i) arriving[i] = state.in_transit[i].front();
      const auto out = inventory_step(multi, state, orders, demand);
      for (std::size_t i = 0; i < 3; ++i) {
        const double incoming = i == 0 ? demand : orders[i - 1];
        CHECK(out.shipped[i] + out.lost[i] == incoming);
        CHECK(out.shipped[i] <= incoming);
        CHECK(out.lost[i] >= 0.0);
        CHECK(out.inventory[i] == std::max(before[i] + arriving[i] - out.shipped[i], 0.0));
        CHECK(out.inventory[i] >= 0.0);
      }
      CHECK(out.shipped[3] == orders[2]);
      double profit = 0.0;
      for (double p : out.profit) profit += p;
      CHECK(out.reward == doctest::Approx(profit));
    }
  }
}

TEST_CASE("demand models") {
  Rng rng(6);
  SUBCASE("uniform mean") {
    DemandProcess d(DemandModel{});
    double total = 0.0;
    for (int k = 0; k < 100000; ++k) {
      const int x = d.next(static_cast<std::size_t>(k + 1), rng);
      REQUIRE(x >= 0);
      REQUIRE(x <= 20);
      total += x;
    }
    CHECK(std::abs(total / 100000 - 10.0) < 0.1);
  }
  SUBCASE("saw wave at the phase reset") {
    DemandModel m{.kind = DemandModel::Kind::periodic_saw, .noise_max = 0};
    DemandProcess d(m);
    CHECK(d.next(9, rng) == 0);  // (9 + 6) mod 15 = 0
    CHECK(d.next(10, rng) == 1);
    DemandProcess noisy(DemandModel{.kind = DemandModel::Kind::periodic_saw});
    for (std::size_t t = 1; t < 200; ++t) {
      const int x = noisy.next(t, rng);
      const int trend = static_cast<int>((t + 6) % 15);
      CHECK(x >= trend);
      CHECK(x <= trend + 7);
    }
  }
  SUBCASE("merton draws are nonnegative integers near the base level") {
    DemandProcess d(DemandModel{.kind = DemandModel::Kind::merton_jump});
    for (std::size_t t = 1; t <= 100; ++t) {
      const int x = d.next(t, rng);
      CHECK(x >= 0);
      CHECK(x < 100);
    }
  }
  SUBCASE("json round trip") {
    for (auto kind : {DemandModel::Kind::uniform, DemandModel::Kind::merton_jump, DemandModel::Kind::periodic_saw}) {
      const DemandModel m{.kind = kind};
      CHECK(to_json(demand_model_from_json(to_json(m))) == to_json(m));
    }
    CHECK_THROWS_AS(demand_model_from_json({{"kind", "poisson"}}), ConfigError);
  }
}

TEST_CASE("inventory environment") {
  for (const auto& chain : {SupplyChainParams::single_echelon(), SupplyChainParams::multi_echelon()}) {
    InventoryEnv env(InventoryConfig{.chain = chain, .horizon = 30});
    env.seed(1);
    auto obs = env.reset();
    CHECK(obs.size() == env.observation_width());
    CHECK(env.observation_steps() == chain.max_lead_time());
    CHECK(env.action_spec().head_count() == chain.echelons());
    Rng rng(2);
    for (bool done = false; !done;) {
      policy::Action a;
      for (std::size_t i = 0; i < chain.echelons(); ++i) a.discrete.push_back(static_cast<std::size_t>(uniform01(rng) * 21));
      auto r = env.step(a);
      CHECK(r.observation.size() == env.observation_width());
      CHECK(r.reward == doctest::Approx(env.last_outcome().reward));
      done = r.done;
    }
    CHECK_THROWS_AS(env.step(pick(0)), UsageError);
  }
}

TEST_CASE("tabular environment") {
  auto mdp = TabularMdp::bandit({{{0.0, 1.0}, {0.5, 0.5}}, {{2.0}, {1.0}}});
  TabularEnv env(mdp);
  env.seed(3);
  env.reset();
  CHECK(env.step(pick(1)).reward == 2.0);
  CHECK(env.reward_bound() == 2.0);
  mdp.initial = {0.5};
  CHECK_THROWS_AS(TabularEnv{mdp}, ConfigError);
}

TEST_CASE("identical seeds give identical trajectories") {
  auto run = [](Environment& env, std::uint64_t seed) {
    env.seed(seed);
    std::vector<double> trace = env.reset();
    Rng rng(seed);
    const auto spec = env.action_spec();
    for (bool done = false; !done;) {
      policy::Action a;
      if (spec.kind == policy::ActionSpec::Kind::simplex) {
        std::vector<double> w(spec.choices, 1.0 / static_cast<double>(spec.choices));
        a = alloc(w);
      } else {
        for (std::size_t k = 0; k < spec.head_count(); ++k) {
          a.discrete.push_back(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(spec.choices)));
        }
      }
      auto r = env.step(a);
      trace.push_back(r.reward);
      trace.insert(trace.end(), r.observation.begin(), r.observation.end());
      done = r.done;
    }
    return trace;
  };
  ZeroMeanEnv zm = ZeroMeanEnv::simple();
  PortfolioEnv pf(PortfolioConfig{});
  InventoryEnv inv(InventoryConfig{.demand = {.kind = DemandModel::Kind::merton_jump}});
  for (Environment* env : std::vector<Environment*>{&zm, &pf, &inv}) {
    const auto a = run(*env, 17);
    auto copy = env->clone();
    const auto b = run(*copy, 17);
    CHECK(a == b);
    CHECK(a != run(*env, 18));
  }
}
