#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "qrl/autodiff/adam.hpp"

namespace qrl::quantile {

/// Decaying step-size sequence indexed from k = 1.
///
///   polynomial:            b * k^(-exponent)
///   exponential staircase: initial * factor^floor((k - 1) / interval)
class StepSchedule {
 public:
  enum class Form { polynomial, exponential_staircase };

  static StepSchedule polynomial(double scale, double exponent);
  static StepSchedule constant(double value) { return polynomial(value, 0.0); }
  static StepSchedule staircase(double initial, double factor, std::uint64_t interval);

  double at(std::uint64_t k) const;
  Form form() const { return form_; }
  double scale() const { return scale_; }
  double rate() const { return rate_; }
  std::uint64_t interval() const { return interval_; }

 private:
  Form form_ = Form::polynomial;
  double scale_ = 1.0;
  double rate_ = 0.0;  // polynomial exponent, or staircase factor
  std::uint64_t interval_ = 1;
};

nlohmann::json to_json(const StepSchedule& s);
StepSchedule schedule_from_json(const nlohmann::json& j);

/// Running estimate of the alpha-quantile of a return stream.
struct QuantileTracker {
  double q = 0.0;
  double alpha = 0.5;
  StepSchedule schedule = StepSchedule::constant(0.1);
  std::uint64_t step_count = 0;
  ad::AdamState adam{1, ad::AdamConfig{}};

  QuantileTracker() = default;
  QuantileTracker(double initial, double alpha, StepSchedule schedule);
};

/// q <- q + beta_k (alpha - 1{r <= q}), beta_k = schedule.at(k), k = step_count + 1.
/// Throws TrainingError for a non-finite return.
void sa_step(QuantileTracker& tracker, double return_value);

/// Feeds 1{r <= q} - alpha as a pseudo-gradient to a scalar Adam update whose learning
/// rate is schedule.at(k).
void adam_quantile_step(QuantileTracker& tracker, double return_value);

/// One tracker per truncation horizon l = first .. last.
class QuantileBank {
 public:
  QuantileBank(std::size_t first_horizon, std::size_t last_horizon, double alpha, StepSchedule schedule,
               double initial = 0.0);

  std::size_t first_horizon() const { return first_; }
  std::size_t last_horizon() const { return first_ + q_.size() - 1; }
  std::size_t size() const { return q_.size(); }
  double alpha() const { return alpha_; }
  const StepSchedule& schedule() const { return schedule_; }

  double value(std::size_t horizon) const;
  std::uint64_t steps(std::size_t horizon) const;
  const std::vector<double>& values() const { return q_; }
  void set(std::size_t horizon, double value);
  /// Sets every horizon's estimate, e.g. after a warm start.
  void set_all(std::span<const double> values);

  /// Number of updates skipped because the importance ratio was not finite.
  std::uint64_t skipped_updates() const { return skipped_; }

  /// q^l <- q^l + beta (alpha - ratio * 1{r <= q^l}); other horizons untouched.
  /// A non-finite ratio skips the update and is counted in skipped_updates().
  /// Throws UsageError for a horizon outside the bank or a negative ratio.
  void sa_step_weighted(std::size_t horizon, double return_value, double ratio);

  /// Adam variant of sa_step_weighted: pseudo-gradient ratio * 1{r <= q^l} - alpha.
  void adam_step_weighted(std::size_t horizon, double return_value, double ratio);

 private:
  std::size_t slot(std::size_t horizon) const;
  bool admit(double return_value, double ratio);

  std::size_t first_;
  double alpha_;
  StepSchedule schedule_;
  std::vector<double> q_;
  std::vector<std::uint64_t> steps_;
  std::vector<ad::AdamState> adam_;
  std::uint64_t skipped_ = 0;
};

/// Order statistic of rank ceil(alpha * N) of the pilot returns.
/// Throws ConfigError for an empty sample.
double warm_start(std::span<const double> samples, double alpha);

}  // namespace qrl::quantile
