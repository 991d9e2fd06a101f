#pragma once

#include <string>
#include <vector>

#include "covseg/nn/parameter.hpp"
#include "covseg/nn/tensor.hpp"

namespace covseg::nn {

// Per-channel batch normalization over (batch, depth, height, width) with
// affine scale/shift and running statistics.
class BatchNorm3d {
 public:
  BatchNorm3d() = default;
  BatchNorm3d(std::string name, int channels, float momentum = 0.1f, float eps = 1e-5f);

  // Batch statistics when `use_batch_stats` (running statistics updated),
  // otherwise the stored running statistics, left untouched.
  Tensor forward(const Tensor& x, bool use_batch_stats, bool keep);
  Tensor backward(const Tensor& dy, bool need_dx);
  void release() { input_ = Tensor(); }

  void reset();
  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }
  std::vector<Buffer*> buffers() { return {&running_mean_, &running_var_}; }
  int channels() const noexcept { return channels_; }

 private:
  int channels_ = 0;
  float momentum_ = 0.1f;
  float eps_ = 1e-5f;
  Parameter weight_;
  Parameter bias_;
  Buffer running_mean_;
  Buffer running_var_;
  Tensor input_;
  std::vector<double> mean_, inv_std_;
  bool batch_stats_ = true;
};

// Per-(sample, channel) normalization over the spatial extent, no affine.
class InstanceNorm3d {
 public:
  explicit InstanceNorm3d(float eps = 1e-5f) : eps_(eps) {}

  Tensor forward(const Tensor& x, bool keep);
  Tensor backward(const Tensor& dy);
  void release() { output_ = Tensor(); }

 private:
  float eps_;
  Tensor output_;  // normalized values
  std::vector<double> inv_std_;
};

// In-place rectifier; backward masks the gradient where the output is zero.
void relu_inplace(Tensor& x);
void relu_backward_inplace(Tensor& dy, const Tensor& y);

// Concatenates two (B, C_i, D, H, W) tensors along channels.
Tensor concat_channels(const Tensor& a, const Tensor& b);
// Splits a channel gradient back into the two parts.
void split_channels(const Tensor& d, int first_channels, Tensor& da, Tensor& db);

void add_inplace(Tensor& dst, const Tensor& src);

}  // namespace covseg::nn
