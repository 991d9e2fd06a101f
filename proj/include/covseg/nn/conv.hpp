#pragma once

#include <random>
#include <string>
#include <vector>

#include "covseg/core/volume.hpp"
#include "covseg/kernels/gemm.hpp"
#include "covseg/nn/parameter.hpp"
#include "covseg/nn/tensor.hpp"

namespace covseg::nn {

struct Triple {
  int d = 1;
  int h = 1;
  int w = 1;
  friend bool operator==(const Triple&, const Triple&) = default;
};

// floor((n + 2 pad - kernel) / stride) + 1 along each axis.
Dims3 conv_output_dims(const Dims3& in, Triple kernel, Triple stride, Triple pad);

// (n - 1) stride - 2 pad + kernel + output_padding along each axis.
Dims3 conv_transpose_output_dims(const Dims3& in, Triple kernel, Triple stride, Triple pad,
                                 Triple output_padding);

// Sliding-window layout of one convolution over a single sample.
struct ConvGeometry {
  int channels = 0;
  Dims3 in;
  Triple kernel, stride, pad;
  Dims3 out;

  int kernel_volume() const noexcept { return kernel.d * kernel.h * kernel.w; }
  int rows() const noexcept { return channels * kernel_volume(); }
  int positions() const noexcept { return static_cast<int>(out.size()); }
  bool is_pointwise() const noexcept;
};

// Unfolds output positions [p0, p1) into col[rows x (p1 - p0)].
void im2col(const float* x, const ConvGeometry& g, int p0, int p1, float* col);
// Adjoint of im2col: accumulates col[rows x (p1 - p0)] into x.
void col2im(const float* col, const ConvGeometry& g, int p0, int p1, float* x);

// The unfolded matrix of x as a GEMM right operand, packed on the fly
// without materializing it. columns_b has rows (channel, kd, kh, kw) and
// output positions as columns; columns_t_b is its transpose.
kernels::PackB columns_b(const float* x, const ConvGeometry& g);
kernels::PackB columns_t_b(const float* x, const ConvGeometry& g);

// 3D convolution, weight (out, in, kd, kh, kw).
class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(std::string name, int in_channels, int out_channels, Triple kernel, Triple stride,
         Triple pad, bool bias);

  // x: (B, in, D, H, W). Keeps x for backward when `keep` is set.
  Tensor forward(const Tensor& x, bool keep);
  // Accumulates parameter gradients; returns dx when `need_dx`, else empty.
  Tensor backward(const Tensor& dy, bool need_dx);
  void release() { input_ = Tensor(); }

  void init_kaiming(std::mt19937_64& rng);
  std::vector<Parameter*> parameters();

  int in_channels() const noexcept { return in_channels_; }
  int out_channels() const noexcept { return out_channels_; }
  Parameter& weight() noexcept { return weight_; }
  Parameter& bias() noexcept { return bias_; }
  bool has_bias() const noexcept { return has_bias_; }

 private:
  ConvGeometry geometry(const Dims3& in) const;

  int in_channels_ = 0;
  int out_channels_ = 0;
  Triple kernel_, stride_, pad_;
  bool has_bias_ = false;
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

// Transposed 3D convolution with an explicit target output shape, weight
// (in, out, kd, kh, kw). The output padding is derived from the target.
class ConvTranspose3d {
 public:
  ConvTranspose3d() = default;
  ConvTranspose3d(std::string name, int in_channels, int out_channels, Triple kernel,
                  Triple stride, Triple pad, bool bias);

  // Output padding that maps `in` onto `target`; throws ShapeError if no
  // admissible padding in [0, stride) reaches it.
  Triple output_padding_for(const Dims3& in, const Dims3& target) const;

  Tensor forward(const Tensor& x, const Dims3& target, bool keep);
  Tensor backward(const Tensor& dy, bool need_dx);
  void release() { input_ = Tensor(); }

  void init_kaiming(std::mt19937_64& rng);
  std::vector<Parameter*> parameters();

  Triple kernel() const noexcept { return kernel_; }
  Triple stride() const noexcept { return stride_; }
  Triple pad() const noexcept { return pad_; }
  int in_channels() const noexcept { return in_channels_; }
  int out_channels() const noexcept { return out_channels_; }
  Parameter& weight() noexcept { return weight_; }
  Parameter& bias() noexcept { return bias_; }

 private:
  int in_channels_ = 0;
  int out_channels_ = 0;
  Triple kernel_, stride_, pad_;
  bool has_bias_ = false;
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
  Dims3 target_;
};

}  // namespace covseg::nn
