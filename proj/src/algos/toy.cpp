#include "qrl/algos/toy.hpp"

#include <algorithm>

#include "qrl/errors.hpp"
#include "qrl/normal.hpp"

namespace qrl::algos {

std::shared_ptr<const policy::PolicyModel> toy_model() {
  ad::Architecture arch;
  arch.input_dim = 1;
  arch.heads.push_back(ad::LayerSpec{.out = 1, .act = ad::Activation::identity, .bias = false});
  return std::make_shared<policy::PolicyModel>(arch, policy::ActionSpec::gaussian(1, 0.0, false), 1.0);
}

ToyTrace run_toy_qpo(const ToySettings& s, std::span<const std::uint64_t> checkpoints, Rng& rng) {
  if (!std::is_sorted(checkpoints.begin(), checkpoints.end())) throw UsageError("checkpoints must be increasing");
  const double z = normal_quantile(s.alpha);
  const double score_bound = toy_model()->score_bound();
  double theta = std::clamp(s.theta0, -1.0, 1.0), q = s.q0;
  ToyTrace trace;
  std::uint64_t k = 0;
  for (std::uint64_t stop : checkpoints) {
    for (; k < stop; ) {
      ++k;
      const double eps = standard_normal(rng);
      const double u = theta + eps;
      // Score of the mean is eps; clipped like every other score.
      const double d = u <= q ? -std::clamp(eps, -score_bound, score_bound) : 0.0;
      q += s.beta.at(k) * (s.alpha - (u <= q ? 1.0 : 0.0));
      theta = std::clamp(theta + s.gamma.at(k) * d, -1.0, 1.0);
    }
    trace.iteration.push_back(k);
    trace.theta.push_back(theta);
    trace.q.push_back(q);
    trace.squared_error.push_back((q - theta - z) * (q - theta - z));
  }
  return trace;
}

}  // namespace qrl::algos
