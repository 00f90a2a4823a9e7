#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "qrl/autodiff/graph.hpp"
#include "qrl/autodiff/network.hpp"
#include "qrl/random.hpp"

namespace qrl::policy {

/// Shape of the action space and the head that parameterizes it.
struct ActionSpec {
  enum class Kind { categorical, simplex, multi_discrete, gaussian };

  Kind kind = Kind::categorical;
  /// categorical: number of choices; multi_discrete: choices per group;
  /// simplex / gaussian: dimension.
  std::size_t choices = 2;
  /// multi_discrete: number of independent categorical groups (one head each).
  std::size_t groups = 1;
  /// simplex / gaussian: initial log standard deviation of the Gaussian latent.
  double initial_log_std = 0.0;
  /// simplex / gaussian: whether the log standard deviation is a trainable parameter.
  bool learn_log_std = true;

  static ActionSpec categorical(std::size_t n) { return {Kind::categorical, n, 1}; }
  static ActionSpec multi_discrete(std::size_t n, std::size_t groups) { return {Kind::multi_discrete, n, groups}; }
  static ActionSpec simplex(std::size_t n, double log_std = -0.5) { return {Kind::simplex, n, 1, log_std, true}; }
  static ActionSpec gaussian(std::size_t n, double log_std, bool learn) { return {Kind::gaussian, n, 1, log_std, learn}; }

  /// Number of network outputs per head and number of heads.
  std::size_t head_width() const { return choices; }
  std::size_t head_count() const { return kind == Kind::multi_discrete ? groups : 1; }
};

/// A sampled action. Discrete kinds fill `discrete`; Gaussian kinds fill `latent` with the
/// Gaussian draw and `value` with its image (identity for gaussian, softmax for simplex).
struct Action {
  std::vector<std::size_t> discrete;
  std::vector<double> latent;
  std::vector<double> value;
};

struct ActResult {
  Action action;
  double log_density = 0.0;
};

/// Immutable description of a policy family: network, action head and the bounds that
/// keep the score function bounded (projection box half-width, score norm clip).
class PolicyModel {
 public:
  PolicyModel(ad::Architecture arch, ActionSpec spec, double box_bound = 1e3, double score_bound = 1e3);

  const ad::Network& network() const { return net_; }
  const ActionSpec& action_spec() const { return spec_; }
  std::size_t parameter_count() const { return net_.parameter_count(); }
  std::size_t observation_width() const { return net_.architecture().input_width(); }
  double box_bound() const { return box_bound_; }
  double score_bound() const { return score_bound_; }

  std::vector<double> initialize(Rng& rng) const;

  /// Log-densities of `actions` at the rows of `observations`, as an [n x 1] node.
  ad::Var log_probs(ad::Graph& graph, ad::Var theta, const ad::Tensor& observations,
                    std::span<const Action> actions) const;

  /// Raw head outputs (logits / Gaussian means) for one observation.
  std::vector<std::vector<double>> head_outputs(std::span<const double> theta, std::span<const double> obs) const;

 private:
  ad::Network net_;
  ActionSpec spec_;
  double box_bound_;
  double score_bound_;
  std::size_t log_std_offset_ = 0;
};

/// theta together with the model it parameterizes.
struct PolicyParams {
  std::shared_ptr<const PolicyModel> model;
  std::vector<double> theta;

  static PolicyParams create(std::shared_ptr<const PolicyModel> model, Rng& init_rng);
};

/// Samples a ~ pi(.|state; theta) and reports log pi(a|state; theta).
/// Throws ConfigError on a state width mismatch and TrainingError on non-finite outputs.
ActResult act(const PolicyParams& params, std::span<const double> state, Rng& rng);

/// Deterministic action: argmax per categorical group, softmax of the mean for simplex,
/// the mean for gaussian.
Action mode_action(const PolicyParams& params, std::span<const double> state);

double log_density(const PolicyParams& params, std::span<const double> state, const Action& action);

/// grad_theta log pi(action|state; theta), rescaled to norm score_bound() if longer.
/// Throws UsageError if the action is not in the action space.
std::vector<double> score(const PolicyParams& params, std::span<const double> state, const Action& action);

/// Clamp every coordinate to [-box_bound, box_bound].
PolicyParams project(PolicyParams params);
void project_in_place(std::span<double> theta, double bound);

/// Categorical probabilities from logits (max-shifted softmax).
std::vector<double> softmax(std::span<const double> logits);

/// Inverse-CDF categorical draw from a single uniform.
std::size_t sample_categorical(std::span<const double> probabilities, double u);

/// Checks `action` against `spec`; throws UsageError when infeasible.
void validate_action(const ActionSpec& spec, const Action& action);

nlohmann::json to_json(const ActionSpec& spec);
ActionSpec action_spec_from_json(const nlohmann::json& j);

}  // namespace qrl::policy
