#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qrl/autodiff/tensor.hpp"

namespace qrl::ad {

enum class Activation : std::uint8_t { identity, tanh, relu };

/// Handle to a node recorded on a Graph.
struct Var {
  std::size_t index = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so creation order is a
/// valid topological order and the backward sweep visits every node once.
///
/// A Graph is built for one loss evaluation and then discarded; gradients never leak
/// between graphs.
class Graph {
 public:
  Graph() = default;

  Var constant(Tensor value);

  /// Leaf whose gradient is returned by backward(). `values` is copied.
  Var parameter(std::span<const double> values, std::size_t rows, std::size_t cols);

  /// Reshaped view of `count = rows * cols` consecutive entries of `source` starting at `offset`.
  Var slice(Var source, std::size_t offset, std::size_t rows, std::size_t cols);

  Var matmul(Var a, Var b);
  /// a[n x m] + bias[1 x m] broadcast over rows.
  Var add_bias(Var a, Var bias);
  Var activate(Var a, Activation act);

  /// act(input * weights + bias). input [n x in], weights [in x out], bias [1 x out].
  Var dense(Var input, Var weights, Var bias, Activation act);
  Var dense(Var input, Var weights, Activation act);

  /// Causal valid convolution over time. input [time x channels], kernel [kernelSize*channels x out].
  /// Output row t is sum_j input[t + j] * kernel block j, t = 0 .. time - kernelSize.
  Var temporal_conv(Var input, Var kernel, std::size_t kernel_size);

  /// Batched form: each row of `input` is one sample of `time` steps flattened time-major.
  /// Returns [batch x (time - kernelSize + 1) * out], also time-major.
  Var temporal_conv_batched(Var input, Var kernel, std::size_t kernel_size, std::size_t time);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var add_scalar(Var a, double offset);
  Var exp(Var a);
  Var square(Var a);
  Var minimum(Var a, Var b);
  /// Elementwise clamp; gradient is zero where the clamp is active.
  Var clip(Var a, double lo, double hi);

  /// Sum of all entries -> 1 x 1.
  Var sum(Var a);
  Var mean(Var a);
  /// Per-row sum -> [n x 1].
  Var row_sum(Var a);
  /// Rows [begin, end).
  Var rows(Var a, std::size_t begin, std::size_t end);

  /// Row-wise log-softmax.
  Var log_softmax(Var a);
  /// out[i] = a[i, index[i]] -> [n x 1].
  Var pick(Var a, std::vector<std::size_t> index);
  /// Diagonal Gaussian log-density of `sample` rows under N(mean, exp(log_std)^2) -> [n x 1].
  /// mean [n x d], log_std [1 x d].
  Var gaussian_log_density(Var mean, Var log_std, Tensor sample);

  const Tensor& value(Var v) const;
  const Tensor& gradient(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

  /// Reverse sweep from a 1 x 1 loss. Returns the concatenated gradients of all parameter
  /// leaves in registration order; parameters the loss does not depend on get zeros.
  /// Throws UsageError for a non-scalar loss.
  std::vector<double> backward(Var loss);

 private:
  enum class Op : std::uint8_t {
    constant, parameter, slice, matmul, add_bias, activate, conv, add, sub, mul, scale,
    add_scalar, exp, square, minimum, clip, sum, row_sum, rows, log_softmax, pick, gaussian
  };

  struct Node {
    Op op;
    Tensor value;
    Tensor grad;
    std::size_t lhs = 0;
    std::size_t rhs = 0;
    double a = 0.0;
    double b = 0.0;
    std::size_t offset = 0;
    std::size_t extra = 0;
    Activation act = Activation::identity;
    std::vector<std::size_t> index;
    Tensor aux;
  };

  Var push(Node node);
  const Node& node(Var v) const;
  void propagate(std::size_t i);

  std::vector<Node> nodes_;
  std::vector<std::size_t> parameters_;
};

}  // namespace qrl::ad
