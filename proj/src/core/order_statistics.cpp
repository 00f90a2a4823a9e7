#include "qrl/order_statistics.hpp"

#include <algorithm>
#include <cmath>

#include "qrl/errors.hpp"

namespace qrl {

std::size_t order_statistic_rank(double alpha, std::size_t n) {
  if (n == 0) throw UsageError("order statistic of an empty sample");
  const double scaled = alpha * static_cast<double>(n);
  const auto rank = static_cast<long long>(std::ceil(scaled - 1e-9 * std::max(1.0, scaled)));
  return static_cast<std::size_t>(std::clamp<long long>(rank, 1, static_cast<long long>(n)));
}

double empirical_quantile_inplace(std::vector<double>& scratch, double alpha) {
  const std::size_t rank = order_statistic_rank(alpha, scratch.size());
  auto nth = scratch.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(scratch.begin(), nth, scratch.end());
  return *nth;
}

double empirical_quantile(std::span<const double> samples, double alpha) {
  std::vector<double> scratch(samples.begin(), samples.end());
  return empirical_quantile_inplace(scratch, alpha);
}

double mean_of(std::span<const double> samples) {
  if (samples.empty()) throw UsageError("mean of an empty sample");
  double total = 0.0;
  for (double x : samples) total += x;
  return total / static_cast<double>(samples.size());
}

double stddev_of(std::span<const double> samples) {
  if (samples.size() < 2) return 0.0;
  const double mu = mean_of(samples);
  double ss = 0.0;
  for (double x : samples) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(samples.size() - 1));
}

}  // namespace qrl
