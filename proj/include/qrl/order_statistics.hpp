#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace qrl {

/// 1-based rank ceil(alpha * n) used by every empirical quantile in the project,
/// clamped to [1, n]. A relative slack absorbs products like 0.7 * 10 = 7.000000000000001.
std::size_t order_statistic_rank(double alpha, std::size_t n);

/// Value of rank ceil(alpha * n) in ascending order. Throws UsageError on empty input.
double empirical_quantile(std::span<const double> samples, double alpha);

/// Same, but reorders `scratch` in place (no copy).
double empirical_quantile_inplace(std::vector<double>& scratch, double alpha);

double mean_of(std::span<const double> samples);

/// Unbiased (n - 1) sample standard deviation; 0 for n < 2.
double stddev_of(std::span<const double> samples);

}  // namespace qrl
