#include "qrl/quantile/tracker.hpp"

#include <cmath>
#include <string>

#include "qrl/errors.hpp"
#include "qrl/order_statistics.hpp"

namespace qrl::quantile {

StepSchedule StepSchedule::polynomial(double scale, double exponent) {
  if (!(scale >= 0.0) || exponent < 0.0) throw ConfigError("polynomial schedule needs scale >= 0, exponent >= 0");
  StepSchedule s;
  s.form_ = Form::polynomial;
  s.scale_ = scale;
  s.rate_ = exponent;
  return s;
}

StepSchedule StepSchedule::staircase(double initial, double factor, std::uint64_t interval) {
  if (!(initial >= 0.0) || !(factor > 0.0 && factor <= 1.0) || interval == 0) {
    throw ConfigError("staircase schedule needs initial >= 0, factor in (0, 1], interval >= 1");
  }
  StepSchedule s;
  s.form_ = Form::exponential_staircase;
  s.scale_ = initial;
  s.rate_ = factor;
  s.interval_ = interval;
  return s;
}

double StepSchedule::at(std::uint64_t k) const {
  if (k == 0) k = 1;
  if (form_ == Form::polynomial) return scale_ * std::pow(static_cast<double>(k), -rate_);
  return scale_ * std::pow(rate_, static_cast<double>((k - 1) / interval_));
}

nlohmann::json to_json(const StepSchedule& s) {
  if (s.form() == StepSchedule::Form::polynomial) {
    return {{"form", "polynomial"}, {"scale", s.scale()}, {"exponent", s.rate()}};
  }
  return {{"form", "staircase"}, {"initial", s.scale()}, {"factor", s.rate()}, {"interval", s.interval()}};
}

StepSchedule schedule_from_json(const nlohmann::json& j) {
  const auto form = j.at("form").get<std::string>();
  if (form == "polynomial") return StepSchedule::polynomial(j.at("scale").get<double>(), j.at("exponent").get<double>());
  if (form == "staircase") {
    return StepSchedule::staircase(j.at("initial").get<double>(), j.at("factor").get<double>(),
                                   j.at("interval").get<std::uint64_t>());
  }
  throw ConfigError("unknown schedule form '" + form + "'");
}

QuantileTracker::QuantileTracker(double initial, double alpha_level, StepSchedule sched)
    : q(initial), alpha(alpha_level), schedule(sched) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("quantile level must lie in (0, 1)");
  if (!std::isfinite(initial)) throw ConfigError("initial quantile estimate must be finite");
}

namespace {

void require_finite_return(double r) {
  if (!std::isfinite(r)) throw TrainingError("non-finite return fed to the quantile tracker");
}

double scalar_adam(ad::AdamState& state, double value, double pseudo_grad, double lr) {
  state.config.learning_rate = lr;
  double v[1] = {value};
  const double g[1] = {pseudo_grad};
  ad::adam_step(state, v, g);
  return v[0];
}

}  // namespace

void sa_step(QuantileTracker& t, double r) {
  require_finite_return(r);
  const double beta = t.schedule.at(++t.step_count);
  t.q += beta * (t.alpha - (r <= t.q ? 1.0 : 0.0));
}

void adam_quantile_step(QuantileTracker& t, double r) {
  require_finite_return(r);
  const double lr = t.schedule.at(++t.step_count);
  t.q = scalar_adam(t.adam, t.q, (r <= t.q ? 1.0 : 0.0) - t.alpha, lr);
}

QuantileBank::QuantileBank(std::size_t first, std::size_t last, double alpha, StepSchedule schedule, double initial)
    : first_(first), alpha_(alpha), schedule_(schedule) {
  if (first == 0 || first > last) throw ConfigError("quantile bank needs 1 <= T0 <= T");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("quantile level must lie in (0, 1)");
  const std::size_t n = last - first + 1;
  q_.assign(n, initial);
  steps_.assign(n, 0);
  adam_.assign(n, ad::AdamState(1, ad::AdamConfig{}));
}

std::size_t QuantileBank::slot(std::size_t horizon) const {
  if (horizon < first_ || horizon > last_horizon()) {
    throw UsageError("horizon " + std::to_string(horizon) + " outside the quantile bank");
  }
  return horizon - first_;
}

double QuantileBank::value(std::size_t horizon) const { return q_[slot(horizon)]; }
std::uint64_t QuantileBank::steps(std::size_t horizon) const { return steps_[slot(horizon)]; }
void QuantileBank::set(std::size_t horizon, double v) { q_[slot(horizon)] = v; }

void QuantileBank::set_all(std::span<const double> values) {
  if (values.size() != q_.size()) throw UsageError("set_all: one value per horizon required");
  q_.assign(values.begin(), values.end());
}

bool QuantileBank::admit(double r, double ratio) {
  require_finite_return(r);
  if (!std::isfinite(ratio)) {
    ++skipped_;
    return false;
  }
  if (ratio < 0.0) throw UsageError("importance ratio must be nonnegative");
  return true;
}

void QuantileBank::sa_step_weighted(std::size_t horizon, double r, double ratio) {
  const std::size_t i = slot(horizon);
  if (!admit(r, ratio)) return;
  const double beta = schedule_.at(++steps_[i]);
  q_[i] += beta * (alpha_ - ratio * (r <= q_[i] ? 1.0 : 0.0));
}

void QuantileBank::adam_step_weighted(std::size_t horizon, double r, double ratio) {
  const std::size_t i = slot(horizon);
  if (!admit(r, ratio)) return;
  const double lr = schedule_.at(++steps_[i]);
  q_[i] = scalar_adam(adam_[i], q_[i], ratio * (r <= q_[i] ? 1.0 : 0.0) - alpha_, lr);
}

double warm_start(std::span<const double> samples, double alpha) {
  if (samples.empty()) throw ConfigError("warm start needs at least one pilot return");
  return empirical_quantile(samples, alpha);
}

}  // namespace qrl::quantile
