#include "covseg/nn/norm.hpp"

#include <cmath>
#include <cstring>

#include "covseg/core/error.hpp"
#include "covseg/kernels/vector_ops.hpp"

namespace covseg::nn {

namespace {

void require_channels(const Tensor& x, int channels, const std::string& who) {
  if (x.rank() != 5 || x.dim(1) != channels) {
    throw ShapeError(who + ": expected " + std::to_string(channels) + " channels, got " +
                     shape_string(x.shape()));
  }
}

}  // namespace

BatchNorm3d::BatchNorm3d(std::string name, int channels, float momentum, float eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      weight_(name + ".weight", {channels}, 1.0f),
      bias_(name + ".bias", {channels}, 0.0f),
      running_mean_{name + ".running_mean", Tensor({channels}, 0.0f)},
      running_var_{name + ".running_var", Tensor({channels}, 1.0f)} {}

void BatchNorm3d::reset() {
  weight_.value.fill(1.0f);
  bias_.value.fill(0.0f);
  running_mean_.value.fill(0.0f);
  running_var_.value.fill(1.0f);
}

Tensor BatchNorm3d::forward(const Tensor& x, bool use_batch_stats, bool keep) {
  require_channels(x, channels_, weight_.name);
  const int batch = x.dim(0);
  const std::size_t n = spatial_size(x);
  const std::size_t count = n * batch;
  mean_.assign(channels_, 0.0);
  inv_std_.assign(channels_, 0.0);
  for (int c = 0; c < channels_; ++c) {
    if (use_batch_stats) {
      double sum = 0.0, sum_sq = 0.0;
      for (int b = 0; b < batch; ++b) {
        const auto m = kernels::moments(
            std::span<const float>(x.data() + (static_cast<std::size_t>(b) * channels_ + c) * n, n));
        sum += m.sum;
        sum_sq += m.sum_sq;
      }
      const double mean = sum / static_cast<double>(count);
      const double var = std::max(0.0, sum_sq / static_cast<double>(count) - mean * mean);
      mean_[c] = mean;
      inv_std_[c] = 1.0 / std::sqrt(var + eps_);
      const double unbiased = count > 1 ? var * static_cast<double>(count) / (count - 1) : var;
      running_mean_.value[c] =
          static_cast<float>((1.0 - momentum_) * running_mean_.value[c] + momentum_ * mean);
      running_var_.value[c] =
          static_cast<float>((1.0 - momentum_) * running_var_.value[c] + momentum_ * unbiased);
    } else {
      mean_[c] = running_mean_.value[c];
      inv_std_[c] = 1.0 / std::sqrt(static_cast<double>(running_var_.value[c]) + eps_);
    }
  }
  Tensor y(x.shape());
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < channels_; ++c) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * n;
      const float scale = static_cast<float>(weight_.value[c] * inv_std_[c]);
      const float shift = static_cast<float>(bias_.value[c] - mean_[c] * weight_.value[c] * inv_std_[c]);
      const float* src = x.data() + off;
      float* dst = y.data() + off;
      for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] * scale + shift;
    }
  }
  batch_stats_ = use_batch_stats;
  if (keep) input_ = x;
  return y;
}

Tensor BatchNorm3d::backward(const Tensor& dy, bool need_dx) {
  if (input_.empty()) throw ShapeError(weight_.name + ": backward without cached input");
  const Tensor& x = input_;
  if (dy.shape() != x.shape()) throw ShapeError(weight_.name + ": gradient shape mismatch");
  const int batch = x.dim(0);
  const std::size_t n = spatial_size(x);
  const double count = static_cast<double>(n * batch);
  Tensor dx;
  if (need_dx) dx = Tensor(x.shape());
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_x = 0.0;
    for (int b = 0; b < batch; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * n;
      std::span<const float> dys(dy.data() + off, n);
      sum_dy += kernels::moments(dys).sum;
      sum_dy_x += kernels::dot(dys, std::span<const float>(x.data() + off, n));
    }
    const double mean = mean_[c], inv_std = inv_std_[c];
    // sum(dy * xhat)
    const double sum_dy_xhat = inv_std * (sum_dy_x - mean * sum_dy);
    if (weight_.trainable) {
      weight_.grad[c] += static_cast<float>(sum_dy_xhat);
      bias_.grad[c] += static_cast<float>(sum_dy);
    }
    if (!need_dx) continue;
    const double gamma = weight_.value[c];
    for (int b = 0; b < batch; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * n;
      const float* xs = x.data() + off;
      const float* dys = dy.data() + off;
      float* dxs = dx.data() + off;
      if (batch_stats_) {
        const double k = gamma * inv_std / count;
        const double mean_dy = sum_dy;
        for (std::size_t i = 0; i < n; ++i) {
          const double xhat = (xs[i] - mean) * inv_std;
          dxs[i] = static_cast<float>(k * (count * dys[i] - mean_dy - xhat * sum_dy_xhat));
        }
      } else {
        const float k = static_cast<float>(gamma * inv_std);
        for (std::size_t i = 0; i < n; ++i) dxs[i] = dys[i] * k;
      }
    }
  }
  return dx;
}

Tensor InstanceNorm3d::forward(const Tensor& x, bool keep) {
  if (x.rank() != 5) throw ShapeError("instance norm expects a rank-5 tensor");
  const std::size_t n = spatial_size(x);
  const std::size_t slabs = static_cast<std::size_t>(x.dim(0)) * x.dim(1);
  Tensor y(x.shape());
  inv_std_.assign(slabs, 0.0);
  for (std::size_t s = 0; s < slabs; ++s) {
    const float* src = x.data() + s * n;
    const auto m = kernels::moments(std::span<const float>(src, n));
    const double mean = m.sum / static_cast<double>(n);
    const double var = std::max(0.0, m.sum_sq / static_cast<double>(n) - mean * mean);
    const double inv_std = 1.0 / std::sqrt(var + eps_);
    inv_std_[s] = inv_std;
    float* dst = y.data() + s * n;
    for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>((src[i] - mean) * inv_std);
  }
  if (keep) output_ = y;
  return y;
}

Tensor InstanceNorm3d::backward(const Tensor& dy) {
  if (output_.empty()) throw ShapeError("instance norm: backward without cached output");
  if (dy.shape() != output_.shape()) throw ShapeError("instance norm: gradient shape mismatch");
  const std::size_t n = spatial_size(dy);
  const std::size_t slabs = static_cast<std::size_t>(dy.dim(0)) * dy.dim(1);
  Tensor dx(dy.shape());
  for (std::size_t s = 0; s < slabs; ++s) {
    std::span<const float> dys(dy.data() + s * n, n);
    std::span<const float> xh(output_.data() + s * n, n);
    const double mean_dy = kernels::moments(dys).sum / static_cast<double>(n);
    const double mean_dy_xhat = kernels::dot(dys, xh) / static_cast<double>(n);
    float* dxs = dx.data() + s * n;
    for (std::size_t i = 0; i < n; ++i) {
      dxs[i] = static_cast<float>(inv_std_[s] * (dys[i] - mean_dy - xh[i] * mean_dy_xhat));
    }
  }
  return dx;
}

void relu_inplace(Tensor& x) {
  for (float& v : x.values()) v = v > 0.0f ? v : 0.0f;
}

void relu_backward_inplace(Tensor& dy, const Tensor& y) {
  if (dy.numel() != y.numel()) throw ShapeError("relu backward: size mismatch");
  float* g = dy.data();
  const float* o = y.data();
  for (std::size_t i = 0; i < dy.numel(); ++i) {
    if (!(o[i] > 0.0f)) g[i] = 0.0f;
  }
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != 5 || b.rank() != 5 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
      a.dim(3) != b.dim(3) || a.dim(4) != b.dim(4)) {
    throw ShapeError("concat: incompatible shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const int batch = a.dim(0);
  const std::size_t n = spatial_size(a);
  const std::size_t na = a.dim(1) * n, nb = b.dim(1) * n;
  Tensor out({batch, a.dim(1) + b.dim(1), a.dim(2), a.dim(3), a.dim(4)});
  for (int i = 0; i < batch; ++i) {
    float* dst = out.data() + i * (na + nb);
    std::memcpy(dst, a.data() + i * na, sizeof(float) * na);
    std::memcpy(dst + na, b.data() + i * nb, sizeof(float) * nb);
  }
  return out;
}

void split_channels(const Tensor& d, int first_channels, Tensor& da, Tensor& db) {
  const int batch = d.dim(0);
  const int second = d.dim(1) - first_channels;
  const std::size_t n = spatial_size(d);
  da = Tensor({batch, first_channels, d.dim(2), d.dim(3), d.dim(4)});
  db = Tensor({batch, second, d.dim(2), d.dim(3), d.dim(4)});
  const std::size_t na = first_channels * n, nb = second * n;
  for (int i = 0; i < batch; ++i) {
    const float* src = d.data() + i * (na + nb);
    std::memcpy(da.data() + i * na, src, sizeof(float) * na);
    std::memcpy(db.data() + i * nb, src + na, sizeof(float) * nb);
  }
}

void add_inplace(Tensor& dst, const Tensor& src) {
  if (dst.shape() != src.shape()) {
    throw ShapeError("add: shape mismatch " + shape_string(dst.shape()) + " vs " +
                     shape_string(src.shape()));
  }
  float* d = dst.data();
  const float* s = src.data();
  for (std::size_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

}  // namespace covseg::nn
