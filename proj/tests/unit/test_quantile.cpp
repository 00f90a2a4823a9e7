#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "qrl/errors.hpp"
#include "qrl/quantile/tracker.hpp"
#include "qrl/random.hpp"

using namespace qrl;
using namespace qrl::quantile;

namespace {

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST_CASE("step schedules") {
  const auto poly = StepSchedule::polynomial(0.5, 0.7);
  CHECK(poly.at(1) == doctest::Approx(0.5));
  CHECK(poly.at(100) == doctest::Approx(0.5 * std::pow(100.0, -0.7)));
  CHECK(StepSchedule::constant(0.1).at(12345) == doctest::Approx(0.1));

  const auto stairs = StepSchedule::staircase(1e-3, 0.8, 2500);
  CHECK(stairs.at(1) == doctest::Approx(1e-3));
  CHECK(stairs.at(2500) == doctest::Approx(1e-3));
  CHECK(stairs.at(2501) == doctest::Approx(8e-4));
  CHECK(stairs.at(5001) == doctest::Approx(6.4e-4));

  for (const auto& s : {poly, stairs}) {
    double prev = s.at(1);
    for (std::uint64_t k = 2; k < 20000; k += 37) {
      CHECK(s.at(k) > 0.0);
      CHECK(s.at(k) <= prev);
      prev = s.at(k);
    }
    const auto back = schedule_from_json(to_json(s));
    CHECK(back.at(7777) == s.at(7777));
  }
  CHECK_THROWS_AS(StepSchedule::staircase(1.0, 1.5, 10), ConfigError);
  CHECK_THROWS_AS(StepSchedule::staircase(1.0, 0.5, 0), ConfigError);
  CHECK_THROWS_AS(schedule_from_json({{"form", "cosine"}}), ConfigError);
}

TEST_CASE("sa_step arithmetic") {
  QuantileTracker t(0.0, 0.25, StepSchedule::constant(0.1));
  SUBCASE("return above q") {
    sa_step(t, 1.0);
    CHECK(t.q == doctest::Approx(0.025));
  }
  SUBCASE("return below q") {
    sa_step(t, -1.0);
    CHECK(t.q == doctest::Approx(-0.075));
  }
  SUBCASE("ties count as below") {
    sa_step(t, 0.0);
    CHECK(t.q == doctest::Approx(-0.075));
  }
  SUBCASE("non-finite return") {
    CHECK_THROWS_AS(sa_step(t, std::numeric_limits<double>::quiet_NaN()), TrainingError);
  }
  CHECK_THROWS_AS(QuantileTracker(0.0, 1.0, StepSchedule::constant(0.1)), ConfigError);
}

TEST_CASE("sa_step converges to the uniform quantile") {
  for (double alpha : {0.1, 0.25, 0.5, 0.9}) {
    Rng rng(static_cast<std::uint64_t>(alpha * 1000));
    QuantileTracker t(0.0, alpha, StepSchedule::polynomial(0.5, 0.7));
    for (int k = 0; k < 200000; ++k) sa_step(t, uniform01(rng));
    CHECK(std::abs(t.q - alpha) <= 0.02);
    CHECK(t.step_count == 200000);
  }
}

TEST_CASE("tracker stays within the return range plus the largest step") {
  const double m = 3.0;
  const auto sched = StepSchedule::polynomial(0.5, 0.7);
  for (double alpha : {0.05, 0.5, 0.95}) {
    Rng rng(11);
    QuantileTracker t(0.0, alpha, sched);
    for (int k = 0; k < 50000; ++k) {
      sa_step(t, m * (2.0 * uniform01(rng) - 1.0));
      REQUIRE(std::abs(t.q) <= m + sched.at(1));
    }
  }
}

TEST_CASE("quantile bank") {
  QuantileBank bank(16, 20, 0.25, StepSchedule::constant(0.1));
  CHECK(bank.size() == 5);

  SUBCASE("one entry changes per update") {
    Rng rng(3);
    for (int k = 0; k < 500; ++k) {
      const auto before = bank.values();
      const std::size_t l = 16 + static_cast<std::size_t>(uniform01(rng) * 5);
      bank.sa_step_weighted(l, 2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng));
      int changed = 0;
      for (std::size_t i = 0; i < before.size(); ++i) changed += before[i] != bank.values()[i];
      CHECK(changed == 1);
    }
  }
  SUBCASE("unit ratio is the plain recursion") {
    QuantileTracker ref(0.0, 0.25, StepSchedule::constant(0.1));
    Rng rng(5);
    for (int k = 0; k < 1000; ++k) {
      const double r = 2.0 * uniform01(rng) - 1.0;
      sa_step(ref, r);
      bank.sa_step_weighted(18, r, 1.0);
    }
    CHECK(bank.value(18) == ref.q);
    CHECK(bank.steps(18) == 1000);
    CHECK(bank.steps(17) == 0);
  }
  SUBCASE("zero ratio moves up by beta * alpha") {
    bank.sa_step_weighted(17, -100.0, 0.0);
    CHECK(bank.value(17) == doctest::Approx(0.025));
  }
  SUBCASE("non-finite ratio is skipped and counted") {
    bank.sa_step_weighted(17, -1.0, std::numeric_limits<double>::infinity());
    bank.sa_step_weighted(17, -1.0, std::numeric_limits<double>::quiet_NaN());
    CHECK(bank.value(17) == 0.0);
    CHECK(bank.steps(17) == 0);
    CHECK(bank.skipped_updates() == 2);
  }
  SUBCASE("bad inputs") {
    CHECK_THROWS_AS(bank.sa_step_weighted(15, 0.0, 1.0), UsageError);
    CHECK_THROWS_AS(bank.sa_step_weighted(21, 0.0, 1.0), UsageError);
    CHECK_THROWS_AS(bank.sa_step_weighted(16, 0.0, -0.5), UsageError);
    CHECK_THROWS_AS(QuantileBank(5, 4, 0.5, StepSchedule::constant(0.1)), ConfigError);
  }
  SUBCASE("adam variant updates one entry and stays finite") {
    QuantileBank adam_bank(16, 20, 0.25, StepSchedule::constant(0.01));
    Rng rng(9);
    double tail_sum = 0.0;
    for (int k = 0; k < 20000; ++k) {
      adam_bank.adam_step_weighted(20, uniform01(rng), 1.0);
      REQUIRE(std::isfinite(adam_bank.value(20)));
      if (k >= 10000) tail_sum += adam_bank.value(20);
    }
    CHECK(adam_bank.value(19) == 0.0);
    CHECK(std::abs(tail_sum / 10000 - 0.25) < 0.03);
  }
}

TEST_CASE("weighted and unweighted trackers agree when behavior equals target") {
  // Two-action bandit, both arms equally likely; arm 0 pays N(0,1), arm 1 pays N(1,1).
  const std::vector<double> target{0.5, 0.5}, behavior{0.5, 0.5};
  const int runs = 10000, steps = 200;
  std::vector<double> plain(runs), weighted(runs);
  Rng rng_a(21), rng_b(22);
  for (int n = 0; n < runs; ++n) {
    QuantileTracker t(0.0, 0.25, StepSchedule::polynomial(0.5, 0.7));
    for (int k = 0; k < steps; ++k) {
      const std::size_t arm = uniform01(rng_a) < target[0] ? 0 : 1;
      sa_step(t, static_cast<double>(arm) + standard_normal(rng_a));
    }
    plain[n] = t.q;

    QuantileBank bank(1, 1, 0.25, StepSchedule::polynomial(0.5, 0.7));
    for (int k = 0; k < steps; ++k) {
      const std::size_t arm = uniform01(rng_b) < behavior[0] ? 0 : 1;
      const double ratio = std::exp(std::log(target[arm]) - std::log(behavior[arm]));
      bank.sa_step_weighted(1, static_cast<double>(arm) + standard_normal(rng_b), ratio);
    }
    weighted[n] = bank.value(1);
  }
  // Critical value at the 1% level: 1.628 * sqrt((n + m) / (n m)).
  const double critical = 1.628 * std::sqrt(2.0 / runs);
  CHECK(ks_statistic(plain, weighted) < critical);
}

TEST_CASE("warm start") {
  CHECK(warm_start(std::vector<double>{1, 2, 3, 4}, 0.5) == 2.0);
  CHECK(warm_start(std::vector<double>{4, 3, 2, 1}, 0.25) == 1.0);
  CHECK(warm_start(std::vector<double>(32, 7.5), 0.1) == 7.5);
  CHECK(warm_start(std::vector<double>(32, 7.5), 0.9) == 7.5);
  CHECK(warm_start(std::vector<double>{3, 9, -1, 5}, 0.999) == 9.0);
  CHECK_THROWS_AS(warm_start(std::vector<double>{}, 0.5), ConfigError);
}

TEST_CASE("adam quantile step") {
  SUBCASE("median of Uniform(0,1)") {
    // At a constant rate the momentum keeps the iterate wandering with spread ~0.05;
    // the running average over the second half settles on the median.
    Rng rng(8);
    QuantileTracker t(0.0, 0.5, StepSchedule::constant(0.01));
    double tail_sum = 0.0;
    for (int k = 0; k < 100000; ++k) {
      adam_quantile_step(t, uniform01(rng));
      if (k >= 50000) tail_sum += t.q;
    }
    CHECK(std::abs(tail_sum / 50000 - 0.5) <= 0.03);
    CHECK(std::abs(t.q - 0.5) <= 0.15);
  }
  SUBCASE("returns on alternating sides keep q finite and bounded steps") {
    QuantileTracker t(0.0, 0.5, StepSchedule::constant(0.01));
    double amplitude_early = 0.0, amplitude_late = 0.0;
    for (int k = 0; k < 10000; ++k) {
      const double before = t.q;
      adam_quantile_step(t, k % 2 == 0 ? t.q + 1e6 : t.q - 1e6);
      REQUIRE(std::isfinite(t.q));
      const double step = std::abs(t.q - before);
      // Bias-corrected adaptive step is at most lr * (1 - beta1) / sqrt(1 - beta2).
      REQUIRE(step <= 0.01 * 0.1 / std::sqrt(0.001) + 1e-12);
      if (k < 100) amplitude_early = std::max(amplitude_early, step);
      if (k >= 9000) amplitude_late = std::max(amplitude_late, step);
    }
    CHECK(amplitude_late < amplitude_early);
  }
}
