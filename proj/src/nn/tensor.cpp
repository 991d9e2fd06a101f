#include "covseg/nn/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "covseg/core/error.hpp"

namespace covseg::nn {

namespace {

std::size_t product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative tensor extent in " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, float fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::reshape(std::vector<int> shape) {
  if (product(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

std::string shape_string(const std::vector<int>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

std::size_t spatial_size(const Tensor& t) {
  if (t.rank() != 5) throw ShapeError("expected a rank-5 tensor, got " + shape_string(t.shape()));
  return static_cast<std::size_t>(t.dim(2)) * t.dim(3) * t.dim(4);
}

}  // namespace covseg::nn
