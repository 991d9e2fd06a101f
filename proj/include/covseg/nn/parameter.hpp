#pragma once

#include <string>
#include <vector>

#include "covseg/nn/tensor.hpp"

namespace covseg::nn {

// A trainable array with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> shape, float fill = 0.0f)
      : name(std::move(n)), value(shape, fill), grad(shape, 0.0f) {}

  void zero_grad() { grad.fill(0.0f); }
};

// A non-trainable state array (normalization running statistics).
struct Buffer {
  std::string name;
  Tensor value;
};

}  // namespace covseg::nn
