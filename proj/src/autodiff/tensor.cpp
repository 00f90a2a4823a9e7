#include "qrl/autodiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qrl/errors.hpp"

namespace qrl::ad {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (rows == 0 || cols == 0) throw ConfigError("tensor extents must be positive");
}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows == 0 || cols == 0) throw ConfigError("tensor extents must be positive");
  if (data_.size() != rows * cols) {
    throw ConfigError("tensor data length " + std::to_string(data_.size()) + " does not match " +
                      std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(1, n, std::move(values));
}

Tensor Tensor::column(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(n, 1, std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor(1, 1, std::vector<double>{value}); }

double Tensor::item() const {
  if (data_.size() != 1) throw UsageError("item() requires a 1x1 tensor");
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

}  // namespace qrl::ad
