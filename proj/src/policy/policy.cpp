#include "qrl/policy/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "qrl/errors.hpp"

namespace qrl::policy {

namespace {

bool is_gaussian(const ActionSpec& spec) {
  return spec.kind == ActionSpec::Kind::simplex || spec.kind == ActionSpec::Kind::gaussian;
}

// Heads follow the action spec; a caller-supplied head only decides whether they carry a bias.
ad::Architecture with_heads(ad::Architecture arch, const ActionSpec& spec) {
  const bool bias = arch.heads.empty() || arch.heads.front().bias;
  arch.heads.clear();
  for (std::size_t k = 0; k < spec.head_count(); ++k) {
    arch.heads.push_back(ad::LayerSpec{.out = spec.head_width(), .act = ad::Activation::identity, .bias = bias});
  }
  return arch;
}

}  // namespace

PolicyModel::PolicyModel(ad::Architecture arch, ActionSpec spec, double box_bound, double score_bound)
    : net_(with_heads(std::move(arch), spec)), spec_(spec), box_bound_(box_bound), score_bound_(score_bound) {
  if (spec_.choices == 0 || spec_.groups == 0) throw ConfigError("action spec extents must be positive");
  if (spec_.kind == ActionSpec::Kind::categorical && spec_.groups != 1) {
    throw ConfigError("categorical action spec has exactly one group");
  }
  if (!(box_bound_ > 0.0) || !(score_bound_ > 0.0)) throw ConfigError("policy bounds must be positive");
  if (is_gaussian(spec_) && spec_.learn_log_std) {
    log_std_offset_ = net_.layout().add("log_std", 1, spec_.choices).offset;
  }
}

std::vector<double> PolicyModel::initialize(Rng& rng) const {
  auto theta = net_.initialize(rng);
  if (is_gaussian(spec_) && spec_.learn_log_std) {
    std::fill_n(theta.begin() + static_cast<std::ptrdiff_t>(log_std_offset_), spec_.choices, spec_.initial_log_std);
  }
  return theta;
}

ad::Var PolicyModel::log_probs(ad::Graph& graph, ad::Var theta, const ad::Tensor& observations,
                               std::span<const Action> actions) const {
  if (actions.size() != observations.rows()) throw UsageError("log_probs: one action per observation row");
  const auto heads = net_.forward(graph, theta, graph.constant(observations));
  const std::size_t n = actions.size();
  if (is_gaussian(spec_)) {
    ad::Tensor sample(n, spec_.choices);
    for (std::size_t i = 0; i < n; ++i) {
      if (actions[i].latent.size() != spec_.choices) throw UsageError("log_probs: latent width mismatch");
      std::copy(actions[i].latent.begin(), actions[i].latent.end(), sample.data().begin() + static_cast<std::ptrdiff_t>(i * spec_.choices));
    }
    ad::Var log_std = spec_.learn_log_std ? graph.slice(theta, log_std_offset_, 1, spec_.choices)
                                          : graph.constant(ad::Tensor(1, spec_.choices, spec_.initial_log_std));
    return graph.gaussian_log_density(heads[0], log_std, std::move(sample));
  }
  ad::Var total{};
  for (std::size_t k = 0; k < heads.size(); ++k) {
    std::vector<std::size_t> index(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (actions[i].discrete.size() != spec_.head_count()) throw UsageError("log_probs: discrete width mismatch");
      index[i] = actions[i].discrete[k];
    }
    ad::Var lp = graph.pick(graph.log_softmax(heads[k]), std::move(index));
    total = k == 0 ? lp : graph.add(total, lp);
  }
  return total;
}

std::vector<std::vector<double>> PolicyModel::head_outputs(std::span<const double> theta,
                                                           std::span<const double> obs) const {
  if (obs.size() != observation_width()) {
    throw ConfigError("state width " + std::to_string(obs.size()) + " != policy input " +
                      std::to_string(observation_width()));
  }
  ad::Graph graph;
  ad::Var th = graph.constant(ad::Tensor(1, theta.size(), std::vector<double>(theta.begin(), theta.end())));
  ad::Var x = graph.constant(ad::Tensor(1, obs.size(), std::vector<double>(obs.begin(), obs.end())));
  std::vector<std::vector<double>> out;
  for (ad::Var h : net_.forward(graph, th, x)) {
    const ad::Tensor& v = graph.value(h);
    if (!v.all_finite()) throw TrainingError("policy network produced a non-finite output");
    out.emplace_back(v.values());
  }
  return out;
}

PolicyParams PolicyParams::create(std::shared_ptr<const PolicyModel> model, Rng& init_rng) {
  auto theta = model->initialize(init_rng);
  return PolicyParams{std::move(model), std::move(theta)};
}

std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += p[i] = std::exp(logits[i] - top);
  for (double& x : p) x /= total;
  return p;
}

std::size_t sample_categorical(std::span<const double> probabilities, double u) {
  double cumulative = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    cumulative += probabilities[i];
    if (u < cumulative) return i;
  }
  return probabilities.size() - 1;
}

namespace {

double gaussian_log_density_of(std::span<const double> mean, std::span<const double> log_std,
                               std::span<const double> x) {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (std::size_t j = 0; j < mean.size(); ++j) {
    const double z = (x[j] - mean[j]) * std::exp(-log_std[j]);
    total += -0.5 * z * z - log_std[j] - half_log_2pi;
  }
  return total;
}

std::vector<double> log_std_of(const PolicyModel& model, std::span<const double> theta) {
  const ActionSpec& spec = model.action_spec();
  if (!spec.learn_log_std) return std::vector<double>(spec.choices, spec.initial_log_std);
  const auto& view = model.network().layout().at("log_std");
  return {theta.begin() + static_cast<std::ptrdiff_t>(view.offset),
          theta.begin() + static_cast<std::ptrdiff_t>(view.offset + view.size())};
}

std::vector<double> latent_image(const ActionSpec& spec, std::span<const double> latent) {
  if (spec.kind == ActionSpec::Kind::simplex) return softmax(latent);
  return {latent.begin(), latent.end()};
}

}  // namespace

ActResult act(const PolicyParams& params, std::span<const double> state, Rng& rng) {
  const PolicyModel& model = *params.model;
  const ActionSpec& spec = model.action_spec();
  const auto heads = model.head_outputs(params.theta, state);
  ActResult result;
  if (is_gaussian(spec)) {
    const auto log_std = log_std_of(model, params.theta);
    std::vector<double> latent(spec.choices);
    for (std::size_t j = 0; j < spec.choices; ++j) {
      latent[j] = heads[0][j] + std::exp(log_std[j]) * standard_normal(rng);
    }
    result.log_density = gaussian_log_density_of(heads[0], log_std, latent);
    result.action.value = latent_image(spec, latent);
    result.action.latent = std::move(latent);
    return result;
  }
  for (const auto& logits : heads) {
    const auto p = softmax(logits);
    const std::size_t choice = sample_categorical(p, uniform01(rng));
    result.action.discrete.push_back(choice);
    result.log_density += std::log(p[choice]);
  }
  return result;
}

Action mode_action(const PolicyParams& params, std::span<const double> state) {
  const PolicyModel& model = *params.model;
  const ActionSpec& spec = model.action_spec();
  const auto heads = model.head_outputs(params.theta, state);
  Action a;
  if (is_gaussian(spec)) {
    a.latent = heads[0];
    a.value = latent_image(spec, a.latent);
    return a;
  }
  for (const auto& logits : heads) {
    a.discrete.push_back(static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin()));
  }
  return a;
}

void validate_action(const ActionSpec& spec, const Action& action) {
  if (is_gaussian(spec)) {
    if (action.latent.size() != spec.choices) throw UsageError("action latent has wrong dimension");
    for (double x : action.latent) {
      if (!std::isfinite(x)) throw UsageError("action latent is not finite");
    }
    return;
  }
  if (action.discrete.size() != spec.head_count()) throw UsageError("action has wrong number of components");
  for (std::size_t c : action.discrete) {
    if (c >= spec.choices) throw UsageError("action index " + std::to_string(c) + " out of range");
  }
}

double log_density(const PolicyParams& params, std::span<const double> state, const Action& action) {
  const PolicyModel& model = *params.model;
  const ActionSpec& spec = model.action_spec();
  validate_action(spec, action);
  const auto heads = model.head_outputs(params.theta, state);
  if (is_gaussian(spec)) return gaussian_log_density_of(heads[0], log_std_of(model, params.theta), action.latent);
  double total = 0.0;
  for (std::size_t k = 0; k < heads.size(); ++k) total += std::log(softmax(heads[k])[action.discrete[k]]);
  return total;
}

std::vector<double> score(const PolicyParams& params, std::span<const double> state, const Action& action) {
  const PolicyModel& model = *params.model;
  validate_action(model.action_spec(), action);
  if (state.size() != model.observation_width()) throw ConfigError("state width does not match policy input");
  ad::Graph graph;
  ad::Var theta = graph.parameter(params.theta, 1, params.theta.size());
  ad::Tensor obs(1, state.size(), std::vector<double>(state.begin(), state.end()));
  ad::Var lp = model.log_probs(graph, theta, obs, std::span<const Action>(&action, 1));
  auto grad = graph.backward(graph.sum(lp));
  double norm2 = 0.0;
  for (double g : grad) {
    if (!std::isfinite(g)) throw TrainingError("non-finite score");
    norm2 += g * g;
  }
  const double norm = std::sqrt(norm2);
  if (norm > model.score_bound()) {
    const double factor = model.score_bound() / norm;
    for (double& g : grad) g *= factor;
  }
  return grad;
}

void project_in_place(std::span<double> theta, double bound) {
  for (double& x : theta) x = std::clamp(x, -bound, bound);
}

PolicyParams project(PolicyParams params) {
  project_in_place(params.theta, params.model->box_bound());
  return params;
}

nlohmann::json to_json(const ActionSpec& spec) {
  static const char* names[] = {"categorical", "simplex", "multi_discrete", "gaussian"};
  return {{"kind", names[static_cast<int>(spec.kind)]},
          {"choices", spec.choices},
          {"groups", spec.groups},
          {"initial_log_std", spec.initial_log_std},
          {"learn_log_std", spec.learn_log_std}};
}

ActionSpec action_spec_from_json(const nlohmann::json& j) {
  ActionSpec s;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "categorical") {
    s.kind = ActionSpec::Kind::categorical;
  } else if (kind == "simplex") {
    s.kind = ActionSpec::Kind::simplex;
  } else if (kind == "multi_discrete") {
    s.kind = ActionSpec::Kind::multi_discrete;
  } else if (kind == "gaussian") {
    s.kind = ActionSpec::Kind::gaussian;
  } else {
    throw ConfigError("unknown action kind '" + kind + "'");
  }
  s.choices = j.at("choices").get<std::size_t>();
  s.groups = j.value("groups", std::size_t{1});
  s.initial_log_std = j.value("initial_log_std", 0.0);
  s.learn_log_std = j.value("learn_log_std", true);
  return s;
}

}  // namespace qrl::policy
