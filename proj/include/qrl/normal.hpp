#pragma once

namespace qrl {

double normal_pdf(double x);
double normal_cdf(double x);
/// Inverse of the standard normal CDF on (0, 1). Throws ConfigError outside.
double normal_quantile(double p);

}  // namespace qrl
