#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qrl/autodiff/graph.hpp"
#include "qrl/random.hpp"

namespace qrl::ad {

enum class LayerKind { dense, temporal_conv };

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t out = 0;
  Activation act = Activation::tanh;
  std::size_t kernel_size = 0;  // temporal_conv only
  bool bias = true;
};

/// Feed-forward network shape. Inputs are rows of `time_steps * input_dim` values laid out
/// time-major. Temporal conv layers (if any) come first in `trunk`; the time axis is then
/// flattened and dense layers follow. `heads` are parallel dense output layers applied to
/// the trunk output; with no heads the trunk output is the network output.
struct Architecture {
  std::size_t input_dim = 0;
  std::size_t time_steps = 1;
  std::vector<LayerSpec> trunk;
  std::vector<LayerSpec> heads;

  std::size_t input_width() const { return input_dim * time_steps; }
  /// Convenience: tanh MLP with the given hidden widths and one identity head.
  static Architecture mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t outputs);
};

/// Named window into the flat parameter vector.
struct ParameterView {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

class ParameterLayout {
 public:
  const ParameterView& add(std::string name, std::size_t rows, std::size_t cols);
  const ParameterView& at(const std::string& name) const;
  const std::vector<ParameterView>& views() const { return views_; }
  std::size_t size() const { return size_; }

 private:
  std::vector<ParameterView> views_;
  std::size_t size_ = 0;
};

/// Binds an Architecture to its parameter layout. Stateless with respect to parameter
/// values: the flat vector is passed in at forward time.
class Network {
 public:
  explicit Network(Architecture arch);

  const Architecture& architecture() const { return arch_; }
  const ParameterLayout& layout() const { return layout_; }
  ParameterLayout& layout() { return layout_; }
  std::size_t parameter_count() const { return layout_.size(); }

  /// Uniform fan-in scaled weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)); zero biases.
  /// Entries beyond the network's own layers (extra views) are left at zero.
  std::vector<double> initialize(Rng& rng) const;

  /// Builds the forward pass of a [batch x input_width] constant on `graph`, reading
  /// weights from the flat parameter leaf `theta`. Returns one Var per head.
  std::vector<Var> forward(Graph& graph, Var theta, Var input) const;

 private:
  Architecture arch_;
  ParameterLayout layout_;
  std::size_t network_params_ = 0;
};

nlohmann::json to_json(const Architecture& arch);
Architecture architecture_from_json(const nlohmann::json& j);

/// Checkpoint document: architecture header, named layout and the flat parameter vector.
nlohmann::json make_snapshot(const Network& net, const std::vector<double>& theta);
/// Restores the parameter vector after checking it against `net`'s layout. Throws ConfigError.
std::vector<double> restore_snapshot(const Network& net, const nlohmann::json& snapshot);

}  // namespace qrl::ad
