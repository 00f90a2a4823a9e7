#include "qrl/policy/baseline.hpp"

#include <string>

#include "qrl/errors.hpp"

namespace qrl::policy {

namespace {

ad::Tensor inputs_of(std::span<const BaselineSample> batch, std::size_t width, std::size_t max_horizon) {
  ad::Tensor x(batch.size(), width + 1);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].s0.size() != width) throw ConfigError("baseline: observation width mismatch");
    for (std::size_t j = 0; j < width; ++j) x(i, j) = batch[i].s0[j];
    x(i, width) = static_cast<double>(batch[i].horizon) / static_cast<double>(max_horizon);
  }
  return x;
}

}  // namespace

BaselineNet::BaselineNet(std::size_t observation_width, std::vector<std::size_t> hidden, std::size_t max_horizon,
                         ad::AdamConfig optimizer, Rng& init_rng)
    : net_(ad::Architecture::mlp(observation_width + 1, hidden, 1)),
      w_(net_.initialize(init_rng)),
      adam_(net_.parameter_count(), optimizer),
      max_horizon_(max_horizon) {
  if (max_horizon == 0) throw ConfigError("baseline: horizon must be positive");
}

double baseline_eval(const BaselineNet& net, std::span<const double> s0, std::size_t horizon) {
  const std::size_t width = net.network().architecture().input_dim - 1;
  BaselineSample sample{std::vector<double>(s0.begin(), s0.end()), horizon, 0.0};
  ad::Graph g;
  ad::Var w = g.constant(ad::Tensor(1, net.weights().size(), net.weights()));
  const auto out = net.network().forward(g, w, g.constant(inputs_of({&sample, 1}, width, net.max_horizon())));
  return g.value(out[0]).item();
}

double baseline_fit(BaselineNet& net, std::span<const BaselineSample> batch) {
  if (batch.empty()) return 0.0;
  const std::size_t width = net.network().architecture().input_dim - 1;
  ad::Graph g;
  ad::Var w = g.parameter(net.weights(), 1, net.weights().size());
  ad::Tensor targets(batch.size(), 1);
  for (std::size_t i = 0; i < batch.size(); ++i) targets(i, 0) = batch[i].target;
  const auto out = net.network().forward(g, w, g.constant(inputs_of(batch, width, net.max_horizon())));
  ad::Var loss = g.mean(g.square(g.sub(out[0], g.constant(std::move(targets)))));
  const double value = g.value(loss).item();
  const auto grad = g.backward(loss);
  ad::adam_step(net.optimizer(), net.weights(), grad);
  return value;
}

}  // namespace qrl::policy
