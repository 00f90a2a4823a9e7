#include "qrl/autodiff/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "qrl/errors.hpp"

namespace qrl::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

ConstMatMap view(const Tensor& t) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

MatMap view(Tensor& t) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

std::string shape_of(const Tensor& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ConfigError(std::string(what) + ": shape mismatch " + shape_of(a) + " vs " + shape_of(b));
  }
}

// Multi-channel conv kernel blocks are contiguous in a time-major flattened row, so each
// output step is a matrix product with a window of the input.
void conv_forward(const Tensor& in, const Tensor& kernel, std::size_t time, std::size_t kernel_size, Tensor& out) {
  const std::size_t channels = in.cols() / time;
  const std::size_t window = kernel_size * channels;
  const std::size_t outc = kernel.cols();
  const std::size_t steps = time - kernel_size + 1;
  const auto k = view(kernel);
  const auto x = view(in);
  auto y = view(out);
  for (std::size_t t = 0; t < steps; ++t) {
    y.middleCols(static_cast<Eigen::Index>(t * outc), static_cast<Eigen::Index>(outc)).noalias() =
        x.middleCols(static_cast<Eigen::Index>(t * channels), static_cast<Eigen::Index>(window)) * k;
  }
}

}  // namespace

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

const Graph::Node& Graph::node(Var v) const {
  if (v.index >= nodes_.size()) throw UsageError("variable does not belong to this graph");
  return nodes_[v.index];
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

const Tensor& Graph::gradient(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) throw UsageError("gradient requested before backward()");
  return n.grad;
}

Var Graph::constant(Tensor value) {
  Node n{.op = Op::constant, .value = std::move(value)};
  return push(std::move(n));
}

Var Graph::parameter(std::span<const double> values, std::size_t rows, std::size_t cols) {
  Tensor t(rows, cols, std::vector<double>(values.begin(), values.end()));
  Node n{.op = Op::parameter, .value = std::move(t)};
  Var v = push(std::move(n));
  parameters_.push_back(v.index);
  return v;
}

Var Graph::slice(Var source, std::size_t offset, std::size_t rows, std::size_t cols) {
  const Tensor& src = value(source);
  if (offset + rows * cols > src.size()) throw ConfigError("slice exceeds source tensor");
  std::vector<double> data(src.data().begin() + static_cast<std::ptrdiff_t>(offset),
                           src.data().begin() + static_cast<std::ptrdiff_t>(offset + rows * cols));
  Node n{.op = Op::slice, .value = Tensor(rows, cols, std::move(data)), .lhs = source.index, .offset = offset};
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& w = value(b);
  if (x.cols() != w.rows()) {
    throw ConfigError("matmul: inner dimensions do not conform " + shape_of(x) + " * " + shape_of(w));
  }
  Tensor out(x.rows(), w.cols());
  view(out).noalias() = view(x) * view(w);
  return push(Node{.op = Op::matmul, .value = std::move(out), .lhs = a.index, .rhs = b.index});
}

Var Graph::add_bias(Var a, Var bias) {
  const Tensor& x = value(a);
  const Tensor& b = value(bias);
  if (b.rows() != 1 || b.cols() != x.cols()) {
    throw ConfigError("add_bias: bias " + shape_of(b) + " does not match " + shape_of(x));
  }
  Tensor out = x;
  view(out).rowwise() += view(b).row(0);
  return push(Node{.op = Op::add_bias, .value = std::move(out), .lhs = a.index, .rhs = bias.index});
}

Var Graph::activate(Var a, Activation act) {
  if (act == Activation::identity) return a;
  Tensor out = value(a);
  for (double& x : out.data()) x = act == Activation::tanh ? std::tanh(x) : std::max(0.0, x);
  return push(Node{.op = Op::activate, .value = std::move(out), .lhs = a.index, .act = act});
}

Var Graph::dense(Var input, Var weights, Var bias, Activation act) {
  return activate(add_bias(matmul(input, weights), bias), act);
}

Var Graph::dense(Var input, Var weights, Activation act) { return activate(matmul(input, weights), act); }

Var Graph::temporal_conv_batched(Var input, Var kernel, std::size_t kernel_size, std::size_t time) {
  const Tensor& x = value(input);
  const Tensor& k = value(kernel);
  if (kernel_size == 0 || time == 0 || x.cols() % time != 0) {
    throw ConfigError("temporal_conv: input width " + std::to_string(x.cols()) + " is not a multiple of time " +
                      std::to_string(time));
  }
  if (time < kernel_size) {
    throw ConfigError("temporal_conv: time extent " + std::to_string(time) + " shorter than kernel " +
                      std::to_string(kernel_size));
  }
  const std::size_t channels = x.cols() / time;
  if (k.rows() != kernel_size * channels) {
    throw ConfigError("temporal_conv: kernel " + shape_of(k) + " does not match kernel size " +
                      std::to_string(kernel_size) + " x channels " + std::to_string(channels));
  }
  Tensor out(x.rows(), (time - kernel_size + 1) * k.cols());
  conv_forward(x, k, time, kernel_size, out);
  return push(Node{.op = Op::conv, .value = std::move(out), .lhs = input.index, .rhs = kernel.index,
                   .offset = kernel_size, .extra = time});
}

Var Graph::temporal_conv(Var input, Var kernel, std::size_t kernel_size) {
  const Tensor& x = value(input);
  const std::size_t time = x.rows();
  if (time < kernel_size) {
    throw ConfigError("temporal_conv: time extent " + std::to_string(time) + " shorter than kernel " +
                      std::to_string(kernel_size));
  }
  // [time x C] viewed as a single flattened sample, result reshaped back to [steps x out].
  Var flat = slice(input, 0, 1, x.size());
  Var y = temporal_conv_batched(flat, kernel, kernel_size, time);
  const std::size_t outc = value(kernel).cols();
  return slice(y, 0, time - kernel_size + 1, outc);
}

Var Graph::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Tensor out = value(a);
  view(out) += view(value(b));
  return push(Node{.op = Op::add, .value = std::move(out), .lhs = a.index, .rhs = b.index});
}

Var Graph::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Tensor out = value(a);
  view(out) -= view(value(b));
  return push(Node{.op = Op::sub, .value = std::move(out), .lhs = a.index, .rhs = b.index});
}

Var Graph::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Tensor out = value(a);
  view(out).array() *= view(value(b)).array();
  return push(Node{.op = Op::mul, .value = std::move(out), .lhs = a.index, .rhs = b.index});
}

Var Graph::scale(Var a, double factor) {
  Tensor out = value(a);
  view(out) *= factor;
  return push(Node{.op = Op::scale, .value = std::move(out), .lhs = a.index, .a = factor});
}

Var Graph::add_scalar(Var a, double offset) {
  Tensor out = value(a);
  view(out).array() += offset;
  return push(Node{.op = Op::add_scalar, .value = std::move(out), .lhs = a.index});
}

Var Graph::exp(Var a) {
  Tensor out = value(a);
  for (double& x : out.data()) x = std::exp(x);
  return push(Node{.op = Op::exp, .value = std::move(out), .lhs = a.index});
}

Var Graph::square(Var a) {
  Tensor out = value(a);
  for (double& x : out.data()) x *= x;
  return push(Node{.op = Op::square, .value = std::move(out), .lhs = a.index});
}

Var Graph::minimum(Var a, Var b) {
  require_same_shape(value(a), value(b), "minimum");
  Tensor out = value(a);
  view(out) = view(out).cwiseMin(view(value(b)));
  return push(Node{.op = Op::minimum, .value = std::move(out), .lhs = a.index, .rhs = b.index});
}

Var Graph::clip(Var a, double lo, double hi) {
  Tensor out = value(a);
  for (double& x : out.data()) x = std::clamp(x, lo, hi);
  return push(Node{.op = Op::clip, .value = std::move(out), .lhs = a.index, .a = lo, .b = hi});
}

Var Graph::sum(Var a) {
  return push(Node{.op = Op::sum, .value = Tensor::scalar(view(value(a)).sum()), .lhs = a.index});
}

Var Graph::mean(Var a) {
  const double n = static_cast<double>(value(a).size());
  return scale(sum(a), 1.0 / n);
}

Var Graph::row_sum(Var a) {
  const Tensor& x = value(a);
  Tensor out(x.rows(), 1);
  view(out) = view(x).rowwise().sum();
  return push(Node{.op = Op::row_sum, .value = std::move(out), .lhs = a.index});
}

Var Graph::rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = value(a);
  if (begin >= end || end > x.rows()) throw UsageError("rows: invalid range");
  std::vector<double> data(x.data().begin() + static_cast<std::ptrdiff_t>(begin * x.cols()),
                           x.data().begin() + static_cast<std::ptrdiff_t>(end * x.cols()));
  return push(Node{.op = Op::rows, .value = Tensor(end - begin, x.cols(), std::move(data)), .lhs = a.index,
                   .offset = begin});
}

Var Graph::log_softmax(Var a) {
  const Tensor& x = value(a);
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double top = x(i, 0);
    for (std::size_t j = 1; j < x.cols(); ++j) top = std::max(top, x(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) total += std::exp(x(i, j) - top);
    const double lse = top + std::log(total);
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j) - lse;
  }
  return push(Node{.op = Op::log_softmax, .value = std::move(out), .lhs = a.index});
}

Var Graph::pick(Var a, std::vector<std::size_t> index) {
  const Tensor& x = value(a);
  if (index.size() != x.rows()) throw UsageError("pick: one index per row required");
  Tensor out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (index[i] >= x.cols()) throw UsageError("pick: index out of range");
    out(i, 0) = x(i, index[i]);
  }
  return push(Node{.op = Op::pick, .value = std::move(out), .lhs = a.index, .index = std::move(index)});
}

Var Graph::gaussian_log_density(Var mean, Var log_std, Tensor sample) {
  const Tensor& mu = value(mean);
  const Tensor& ls = value(log_std);
  require_same_shape(mu, sample, "gaussian_log_density");
  if (ls.rows() != 1 || ls.cols() != mu.cols()) throw ConfigError("gaussian_log_density: log_std shape");
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  Tensor out(mu.rows(), 1);
  for (std::size_t i = 0; i < mu.rows(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < mu.cols(); ++j) {
      const double z = (sample(i, j) - mu(i, j)) * std::exp(-ls(0, j));
      total += -0.5 * z * z - ls(0, j) - half_log_2pi;
    }
    out(i, 0) = total;
  }
  return push(Node{.op = Op::gaussian, .value = std::move(out), .lhs = mean.index, .rhs = log_std.index,
                   .aux = std::move(sample)});
}

std::vector<double> Graph::backward(Var loss) {
  const Tensor& l = value(loss);
  if (l.rows() != 1 || l.cols() != 1) throw UsageError("backward() requires a scalar loss, got " + shape_of(l));
  for (Node& n : nodes_) n.grad = Tensor(n.value.rows(), n.value.cols(), 0.0);
  nodes_[loss.index].grad[0] = 1.0;
  for (std::size_t i = loss.index + 1; i-- > 0;) propagate(i);

  std::vector<double> out;
  for (std::size_t p : parameters_) {
    const auto g = nodes_[p].grad.data();
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

void Graph::propagate(std::size_t i) {
  Node& n = nodes_[i];
  const Tensor& g = n.grad;
  switch (n.op) {
    case Op::constant:
    case Op::parameter:
      return;
    case Op::slice: {
      Tensor& pg = nodes_[n.lhs].grad;
      for (std::size_t k = 0; k < g.size(); ++k) pg[n.offset + k] += g[k];
      return;
    }
    case Op::matmul: {
      const Tensor& x = nodes_[n.lhs].value;
      const Tensor& w = nodes_[n.rhs].value;
      view(nodes_[n.lhs].grad).noalias() += view(g) * view(w).transpose();
      view(nodes_[n.rhs].grad).noalias() += view(x).transpose() * view(g);
      return;
    }
    case Op::add_bias:
      view(nodes_[n.lhs].grad) += view(g);
      view(nodes_[n.rhs].grad).row(0) += view(g).colwise().sum();
      return;
    case Op::activate: {
      Tensor& pg = nodes_[n.lhs].grad;
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double y = n.value[k];
        pg[k] += n.act == Activation::tanh ? g[k] * (1.0 - y * y) : (y > 0.0 ? g[k] : 0.0);
      }
      return;
    }
    case Op::conv: {
      const std::size_t kernel_size = n.offset;
      const std::size_t time = n.extra;
      const Tensor& x = nodes_[n.lhs].value;
      const Tensor& k = nodes_[n.rhs].value;
      const std::size_t channels = x.cols() / time;
      const auto window = static_cast<Eigen::Index>(kernel_size * channels);
      const std::size_t outc = k.cols();
      auto gx = view(nodes_[n.lhs].grad);
      auto gk = view(nodes_[n.rhs].grad);
      const auto gy = view(g);
      const auto xv = view(x);
      const auto kv = view(k);
      for (std::size_t t = 0; t + kernel_size <= time; ++t) {
        const auto cols = gy.middleCols(static_cast<Eigen::Index>(t * outc), static_cast<Eigen::Index>(outc));
        gx.middleCols(static_cast<Eigen::Index>(t * channels), window).noalias() += cols * kv.transpose();
        gk.noalias() += xv.middleCols(static_cast<Eigen::Index>(t * channels), window).transpose() * cols;
      }
      return;
    }
    case Op::add:
      view(nodes_[n.lhs].grad) += view(g);
      view(nodes_[n.rhs].grad) += view(g);
      return;
    case Op::sub:
      view(nodes_[n.lhs].grad) += view(g);
      view(nodes_[n.rhs].grad) -= view(g);
      return;
    case Op::mul:
      view(nodes_[n.lhs].grad).array() += view(g).array() * view(nodes_[n.rhs].value).array();
      view(nodes_[n.rhs].grad).array() += view(g).array() * view(nodes_[n.lhs].value).array();
      return;
    case Op::scale:
      view(nodes_[n.lhs].grad) += n.a * view(g);
      return;
    case Op::add_scalar:
      view(nodes_[n.lhs].grad) += view(g);
      return;
    case Op::exp:
      view(nodes_[n.lhs].grad).array() += view(g).array() * view(n.value).array();
      return;
    case Op::square:
      view(nodes_[n.lhs].grad).array() += 2.0 * view(g).array() * view(nodes_[n.lhs].value).array();
      return;
    case Op::minimum: {
      const Tensor& a = nodes_[n.lhs].value;
      const Tensor& b = nodes_[n.rhs].value;
      Tensor& ga = nodes_[n.lhs].grad;
      Tensor& gb = nodes_[n.rhs].grad;
      for (std::size_t k = 0; k < g.size(); ++k) (a[k] <= b[k] ? ga : gb)[k] += g[k];
      return;
    }
    case Op::clip: {
      const Tensor& a = nodes_[n.lhs].value;
      Tensor& ga = nodes_[n.lhs].grad;
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (a[k] >= n.a && a[k] <= n.b) ga[k] += g[k];
      }
      return;
    }
    case Op::sum:
      view(nodes_[n.lhs].grad).array() += g[0];
      return;
    case Op::row_sum:
      view(nodes_[n.lhs].grad).colwise() += view(g).col(0);
      return;
    case Op::rows: {
      Tensor& pg = nodes_[n.lhs].grad;
      const std::size_t base = n.offset * pg.cols();
      for (std::size_t k = 0; k < g.size(); ++k) pg[base + k] += g[k];
      return;
    }
    case Op::log_softmax: {
      Tensor& pg = nodes_[n.lhs].grad;
      for (std::size_t r = 0; r < g.rows(); ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < g.cols(); ++c) total += g(r, c);
        for (std::size_t c = 0; c < g.cols(); ++c) pg(r, c) += g(r, c) - std::exp(n.value(r, c)) * total;
      }
      return;
    }
    case Op::pick: {
      Tensor& pg = nodes_[n.lhs].grad;
      for (std::size_t r = 0; r < g.rows(); ++r) pg(r, n.index[r]) += g(r, 0);
      return;
    }
    case Op::gaussian: {
      const Tensor& mu = nodes_[n.lhs].value;
      const Tensor& ls = nodes_[n.rhs].value;
      Tensor& gmu = nodes_[n.lhs].grad;
      Tensor& gls = nodes_[n.rhs].grad;
      for (std::size_t r = 0; r < mu.rows(); ++r) {
        for (std::size_t c = 0; c < mu.cols(); ++c) {
          const double inv_sd = std::exp(-ls(0, c));
          const double z = (n.aux(r, c) - mu(r, c)) * inv_sd;
          gmu(r, c) += g(r, 0) * z * inv_sd;
          gls(0, c) += g(r, 0) * (z * z - 1.0);
        }
      }
      return;
    }
  }
}

}  // namespace qrl::ad
