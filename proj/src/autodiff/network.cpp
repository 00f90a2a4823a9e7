#include "qrl/autodiff/network.hpp"

#include <cmath>
#include <string>

#include "qrl/errors.hpp"

namespace qrl::ad {

Architecture Architecture::mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t outputs) {
  Architecture arch;
  arch.input_dim = input_dim;
  for (std::size_t width : hidden) arch.trunk.push_back(LayerSpec{.out = width, .act = Activation::tanh});
  arch.heads.push_back(LayerSpec{.out = outputs, .act = Activation::identity});
  return arch;
}

const ParameterView& ParameterLayout::add(std::string name, std::size_t rows, std::size_t cols) {
  for (const auto& v : views_) {
    if (v.name == name) throw ConfigError("duplicate parameter view '" + name + "'");
  }
  views_.push_back(ParameterView{std::move(name), size_, rows, cols});
  size_ += rows * cols;
  return views_.back();
}

const ParameterView& ParameterLayout::at(const std::string& name) const {
  for (const auto& v : views_) {
    if (v.name == name) return v;
  }
  throw UsageError("no parameter view named '" + name + "'");
}

Network::Network(Architecture arch) : arch_(std::move(arch)) {
  if (arch_.input_dim == 0 || arch_.time_steps == 0) throw ConfigError("network input extents must be positive");
  std::size_t time = arch_.time_steps;
  std::size_t width = arch_.input_dim;
  bool flattened = time == 1;
  for (std::size_t i = 0; i < arch_.trunk.size(); ++i) {
    const LayerSpec& layer = arch_.trunk[i];
    if (layer.out == 0) throw ConfigError("layer width must be positive");
    const std::string prefix = "trunk" + std::to_string(i);
    if (layer.kind == LayerKind::temporal_conv) {
      if (flattened) throw ConfigError("temporal conv layers must precede dense layers");
      if (layer.kernel_size == 0 || layer.kernel_size > time) {
        throw ConfigError("temporal conv kernel " + std::to_string(layer.kernel_size) + " exceeds time extent " +
                          std::to_string(time));
      }
      layout_.add(prefix + ".kernel", layer.kernel_size * width, layer.out);
      if (layer.bias) layout_.add(prefix + ".bias", 1, layer.out);
      time = time - layer.kernel_size + 1;
      width = layer.out;
    } else {
      if (!flattened) {
        width *= time;
        time = 1;
        flattened = true;
      }
      layout_.add(prefix + ".weight", width, layer.out);
      if (layer.bias) layout_.add(prefix + ".bias", 1, layer.out);
      width = layer.out;
    }
  }
  if (!flattened) width *= time;
  for (std::size_t h = 0; h < arch_.heads.size(); ++h) {
    const LayerSpec& head = arch_.heads[h];
    if (head.kind != LayerKind::dense || head.out == 0) throw ConfigError("heads must be dense with positive width");
    const std::string prefix = "head" + std::to_string(h);
    layout_.add(prefix + ".weight", width, head.out);
    if (head.bias) layout_.add(prefix + ".bias", 1, head.out);
  }
  network_params_ = layout_.size();
}

std::vector<double> Network::initialize(Rng& rng) const {
  std::vector<double> theta(layout_.size(), 0.0);
  for (const auto& v : layout_.views()) {
    if (v.offset >= network_params_) break;
    if (v.name.ends_with(".bias")) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(v.rows));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t k = 0; k < v.size(); ++k) theta[v.offset + k] = dist(rng);
  }
  return theta;
}

std::vector<Var> Network::forward(Graph& graph, Var theta, Var input) const {
  if (graph.value(input).cols() != arch_.input_width()) {
    throw ConfigError("network input width " + std::to_string(graph.value(input).cols()) + " != " +
                      std::to_string(arch_.input_width()));
  }
  auto param = [&](const std::string& name) {
    const ParameterView& v = layout_.at(name);
    return graph.slice(theta, v.offset, v.rows, v.cols);
  };
  Var h = input;
  std::size_t time = arch_.time_steps;
  for (std::size_t i = 0; i < arch_.trunk.size(); ++i) {
    const LayerSpec& layer = arch_.trunk[i];
    const std::string prefix = "trunk" + std::to_string(i);
    if (layer.kind == LayerKind::temporal_conv) {
      h = graph.temporal_conv_batched(h, param(prefix + ".kernel"), layer.kernel_size, time);
      time = time - layer.kernel_size + 1;
      if (layer.bias) {
        // Bias is shared across the remaining time steps.
        const ParameterView& bv = layout_.at(prefix + ".bias");
        Var b = graph.slice(theta, bv.offset, 1, bv.cols);
        if (time == 1) {
          h = graph.add_bias(h, b);
        } else {
          const std::size_t batch = graph.value(h).rows();
          Var per_step = graph.slice(h, 0, batch * time, layer.out);
          h = graph.slice(graph.add_bias(per_step, b), 0, batch, time * layer.out);
        }
      }
      h = graph.activate(h, layer.act);
    } else {
      h = layer.bias ? graph.dense(h, param(prefix + ".weight"), param(prefix + ".bias"), layer.act)
                     : graph.dense(h, param(prefix + ".weight"), layer.act);
    }
  }
  if (arch_.heads.empty()) return {h};
  std::vector<Var> outputs;
  for (std::size_t k = 0; k < arch_.heads.size(); ++k) {
    const LayerSpec& head = arch_.heads[k];
    const std::string prefix = "head" + std::to_string(k);
    outputs.push_back(head.bias ? graph.dense(h, param(prefix + ".weight"), param(prefix + ".bias"), head.act)
                                : graph.dense(h, param(prefix + ".weight"), head.act));
  }
  return outputs;
}

namespace {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::identity:
      return "identity";
    case Activation::tanh:
      return "tanh";
    case Activation::relu:
      return "relu";
  }
  return "identity";
}

Activation activation_from(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + s + "'");
}

nlohmann::json layer_json(const LayerSpec& l) {
  nlohmann::json j{{"kind", l.kind == LayerKind::dense ? "dense" : "temporal_conv"},
                   {"out", l.out},
                   {"activation", activation_name(l.act)},
                   {"bias", l.bias}};
  if (l.kind == LayerKind::temporal_conv) j["kernel_size"] = l.kernel_size;
  return j;
}

LayerSpec layer_from(const nlohmann::json& j) {
  LayerSpec l;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "dense") {
    l.kind = LayerKind::dense;
  } else if (kind == "temporal_conv") {
    l.kind = LayerKind::temporal_conv;
    l.kernel_size = j.at("kernel_size").get<std::size_t>();
  } else {
    throw ConfigError("unknown layer kind '" + kind + "'");
  }
  l.out = j.at("out").get<std::size_t>();
  l.act = activation_from(j.value("activation", std::string("tanh")));
  l.bias = j.value("bias", true);
  return l;
}

}  // namespace

nlohmann::json to_json(const Architecture& arch) {
  nlohmann::json trunk = nlohmann::json::array();
  for (const auto& l : arch.trunk) trunk.push_back(layer_json(l));
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& l : arch.heads) heads.push_back(layer_json(l));
  return {{"input_dim", arch.input_dim}, {"time_steps", arch.time_steps}, {"trunk", trunk}, {"heads", heads}};
}

Architecture architecture_from_json(const nlohmann::json& j) {
  try {
    Architecture arch;
    arch.input_dim = j.at("input_dim").get<std::size_t>();
    arch.time_steps = j.value("time_steps", std::size_t{1});
    for (const auto& l : j.at("trunk")) arch.trunk.push_back(layer_from(l));
    for (const auto& l : j.at("heads")) arch.heads.push_back(layer_from(l));
    return arch;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed architecture: ") + e.what());
  }
}

nlohmann::json make_snapshot(const Network& net, const std::vector<double>& theta) {
  if (theta.size() != net.parameter_count()) throw UsageError("snapshot: parameter vector size mismatch");
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& v : net.layout().views()) {
    layout.push_back({{"name", v.name}, {"offset", v.offset}, {"rows", v.rows}, {"cols", v.cols}});
  }
  return {{"architecture", to_json(net.architecture())}, {"layout", layout}, {"theta", theta}};
}

std::vector<double> restore_snapshot(const Network& net, const nlohmann::json& snapshot) {
  try {
    const auto& layout = snapshot.at("layout");
    const auto& views = net.layout().views();
    if (layout.size() != views.size()) throw ConfigError("snapshot layout does not match network");
    for (std::size_t i = 0; i < views.size(); ++i) {
      if (layout[i].at("name").get<std::string>() != views[i].name ||
          layout[i].at("offset").get<std::size_t>() != views[i].offset ||
          layout[i].at("rows").get<std::size_t>() != views[i].rows ||
          layout[i].at("cols").get<std::size_t>() != views[i].cols) {
        throw ConfigError("snapshot view '" + views[i].name + "' does not match network");
      }
    }
    auto theta = snapshot.at("theta").get<std::vector<double>>();
    if (theta.size() != net.parameter_count()) throw ConfigError("snapshot parameter count mismatch");
    return theta;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed snapshot: ") + e.what());
  }
}

}  // namespace qrl::ad
