#include "covseg/nn/conv.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

#include "covseg/kernels/gemm.hpp"

namespace covseg::nn {

using kernels::matrix_b;
using kernels::PackedA;
using kernels::sgemm_packed;
using kernels::Trans;

namespace {

// Upper bound on the unfolded column buffer (floats); larger problems are
// processed in position chunks.
constexpr std::size_t kMaxColumnFloats = std::size_t{1} << 22;

int chunk_positions(int rows, int positions) {
  std::size_t n = kMaxColumnFloats / static_cast<std::size_t>(std::max(rows, 1));
  n = std::max<std::size_t>(n, 64);
  n -= n % 32;
  return static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(positions)));
}

int axis_out(int n, int k, int s, int p) { return (n + 2 * p - k) / s + 1; }

void check_rank5(const Tensor& x, int channels, const char* who) {
  if (x.rank() != 5 || x.dim(1) != channels) {
    throw ShapeError(std::string(who) + ": expected (B, " + std::to_string(channels) +
                     ", D, H, W), got " + shape_string(x.shape()));
  }
}

Dims3 spatial(const Tensor& x) { return {x.dim(2), x.dim(3), x.dim(4)}; }

thread_local std::vector<float> g_col;

float* column_buffer(std::size_t n) {
  if (g_col.size() < n) g_col.resize(n);
  return g_col.data();
}

// w laid out (a, b, kd, kh, kw) -> (b, a, kd, kh, kw) with every kernel
// axis reversed.
std::vector<float> flip_swap(const float* w, int a, int b, Triple k) {
  const int kvol = k.d * k.h * k.w;
  std::vector<float> out(static_cast<std::size_t>(a) * b * kvol);
  for (int i = 0; i < a; ++i) {
    for (int j = 0; j < b; ++j) {
      const float* src = w + (static_cast<std::size_t>(i) * b + j) * kvol;
      float* dst = out.data() + (static_cast<std::size_t>(j) * a + i) * kvol;
      for (int t = 0; t < kvol; ++t) dst[t] = src[kvol - 1 - t];
    }
  }
  return out;
}

// Stride-1 geometry whose unfolding turns the adjoint into a correlation;
// only valid when every padding is at most kernel - 1.
bool has_correlation_adjoint(Triple k, Triple s, Triple p) {
  return s == Triple{1, 1, 1} && p.d <= k.d - 1 && p.h <= k.h - 1 && p.w <= k.w - 1;
}

Triple adjoint_pad(Triple k, Triple p) { return {k.d - 1 - p.d, k.h - 1 - p.h, k.w - 1 - p.w}; }

void add_bias(float* y, const Parameter& bias, int channels, std::size_t n) {
  for (int c = 0; c < channels; ++c) {
    float* row = y + c * n;
    const float bv = bias.value[c];
    for (std::size_t i = 0; i < n; ++i) row[i] += bv;
  }
}

void accumulate_bias_grad(const float* dy, Parameter& bias, int channels, std::size_t n) {
  for (int c = 0; c < channels; ++c) {
    const float* row = dy + c * n;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += row[i];
    bias.grad[c] += static_cast<float>(s);
  }
}

void kaiming(Parameter& w, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  for (float& v : w.value.values()) v = dist(rng);
}

}  // namespace

Dims3 conv_output_dims(const Dims3& in, Triple k, Triple s, Triple p) {
  return {axis_out(in.depth, k.d, s.d, p.d), axis_out(in.height, k.h, s.h, p.h),
          axis_out(in.width, k.w, s.w, p.w)};
}

Dims3 conv_transpose_output_dims(const Dims3& in, Triple k, Triple s, Triple p, Triple op) {
  return {(in.depth - 1) * s.d - 2 * p.d + k.d + op.d,
          (in.height - 1) * s.h - 2 * p.h + k.h + op.h,
          (in.width - 1) * s.w - 2 * p.w + k.w + op.w};
}

bool ConvGeometry::is_pointwise() const noexcept {
  return kernel == Triple{1, 1, 1} && stride == Triple{1, 1, 1} && pad == Triple{0, 0, 0};
}

void im2col(const float* x, const ConvGeometry& g, int p0, int p1, float* col) {
  const int np = p1 - p0;
  const int od0 = p0 / (g.out.height * g.out.width);
  const int oh0 = (p0 / g.out.width) % g.out.height;
  const int ow0 = p0 % g.out.width;
  float* dst = col;
  for (int c = 0; c < g.channels; ++c) {
    const float* xc = x + static_cast<std::size_t>(c) * g.in.size();
    for (int kd = 0; kd < g.kernel.d; ++kd) {
      for (int kh = 0; kh < g.kernel.h; ++kh) {
        for (int kw = 0; kw < g.kernel.w; ++kw) {
          int od = od0, oh = oh0, ow = ow0;
          int p = p0;
          float* out = dst;
          while (p < p1) {
            const int run = std::min(g.out.width - ow, p1 - p);
            const int id = od * g.stride.d - g.pad.d + kd;
            const int ih = oh * g.stride.h - g.pad.h + kh;
            if (id < 0 || id >= g.in.depth || ih < 0 || ih >= g.in.height) {
              std::fill(out, out + run, 0.0f);
            } else {
              const float* src = xc + (static_cast<std::size_t>(id) * g.in.height + ih) * g.in.width;
              int iw = ow * g.stride.w - g.pad.w + kw;
              if (g.stride.w == 1 && iw >= 0 && iw + run <= g.in.width) {
                std::memcpy(out, src + iw, sizeof(float) * run);
              } else {
                for (int t = 0; t < run; ++t, iw += g.stride.w) {
                  out[t] = (iw >= 0 && iw < g.in.width) ? src[iw] : 0.0f;
                }
              }
            }
            out += run;
            p += run;
            ow = 0;
            if (++oh == g.out.height) {
              oh = 0;
              ++od;
            }
          }
          dst += np;
        }
      }
    }
  }
}

void col2im(const float* col, const ConvGeometry& g, int p0, int p1, float* x) {
  const int np = p1 - p0;
  const int od0 = p0 / (g.out.height * g.out.width);
  const int oh0 = (p0 / g.out.width) % g.out.height;
  const int ow0 = p0 % g.out.width;
  const float* src_row = col;
  for (int c = 0; c < g.channels; ++c) {
    float* xc = x + static_cast<std::size_t>(c) * g.in.size();
    for (int kd = 0; kd < g.kernel.d; ++kd) {
      for (int kh = 0; kh < g.kernel.h; ++kh) {
        for (int kw = 0; kw < g.kernel.w; ++kw) {
          int od = od0, oh = oh0, ow = ow0;
          int p = p0;
          const float* in = src_row;
          while (p < p1) {
            const int run = std::min(g.out.width - ow, p1 - p);
            const int id = od * g.stride.d - g.pad.d + kd;
            const int ih = oh * g.stride.h - g.pad.h + kh;
            if (id >= 0 && id < g.in.depth && ih >= 0 && ih < g.in.height) {
              float* dst = xc + (static_cast<std::size_t>(id) * g.in.height + ih) * g.in.width;
              int iw = ow * g.stride.w - g.pad.w + kw;
              for (int t = 0; t < run; ++t, iw += g.stride.w) {
                if (iw >= 0 && iw < g.in.width) dst[iw] += in[t];
              }
            }
            in += run;
            p += run;
            ow = 0;
            if (++oh == g.out.height) {
              oh = 0;
              ++od;
            }
          }
          src_row += np;
        }
      }
    }
  }
}

namespace {

// Zero-padded copy of x plus precomputed offsets: unfolded element (r, p)
// is padded[tap[r] + position[p]], so the packers never bounds-check.
struct PaddedSource {
  std::vector<float> padded;
  std::vector<std::ptrdiff_t> tap;
  ConvGeometry g;
  Dims3 dims;

  PaddedSource(const float* x, const ConvGeometry& geo) : g(geo) {
    dims = {g.in.depth + 2 * g.pad.d, g.in.height + 2 * g.pad.h, g.in.width + 2 * g.pad.w};
    padded.assign(static_cast<std::size_t>(g.channels) * dims.size(), 0.0f);
    for (int c = 0; c < g.channels; ++c) {
      for (int d = 0; d < g.in.depth; ++d) {
        for (int h = 0; h < g.in.height; ++h) {
          const float* src = x + ((static_cast<std::size_t>(c) * g.in.depth + d) * g.in.height + h) *
                                     g.in.width;
          float* dst = padded.data() +
                       ((static_cast<std::size_t>(c) * dims.depth + d + g.pad.d) * dims.height + h +
                        g.pad.h) * dims.width + g.pad.w;
          std::copy(src, src + g.in.width, dst);
        }
      }
    }
    tap.resize(static_cast<std::size_t>(g.rows()));
    std::size_t r = 0;
    for (int c = 0; c < g.channels; ++c)
      for (int kd = 0; kd < g.kernel.d; ++kd)
        for (int kh = 0; kh < g.kernel.h; ++kh)
          for (int kw = 0; kw < g.kernel.w; ++kw)
            tap[r++] = ((static_cast<std::ptrdiff_t>(c) * dims.depth + kd) * dims.height + kh) *
                           dims.width + kw;
  }

  std::ptrdiff_t position(int od, int oh, int ow) const {
    return (static_cast<std::ptrdiff_t>(od) * g.stride.d * dims.height + oh * g.stride.h) *
               dims.width + static_cast<std::ptrdiff_t>(ow) * g.stride.w;
  }
};

struct Run {
  int offset, length;
  std::ptrdiff_t base;
};

// Splits positions [p, p + count) into runs along the output width.
int split_runs(const PaddedSource& src, int p, int count, Run* runs) {
  const ConvGeometry& g = src.g;
  const int plane = g.out.height * g.out.width;
  int od = p / plane, oh = (p / g.out.width) % g.out.height, ow = p % g.out.width;
  int n = 0;
  for (int j = 0; j < count;) {
    const int len = std::min(g.out.width - ow, count - j);
    runs[n++] = {j, len, src.position(od, oh, ow)};
    j += len;
    ow = 0;
    if (++oh == g.out.height) {
      oh = 0;
      ++od;
    }
  }
  return n;
}

inline void copy_run(float* dst, const float* src, int len, int step) {
  if (step == 1) {
    if (len == 32) {
      for (int j = 0; j < 32; ++j) dst[j] = src[j];
    } else {
      for (int j = 0; j < len; ++j) dst[j] = src[j];
    }
  } else {
    for (int j = 0; j < len; ++j) dst[j] = src[j * step];
  }
}

}  // namespace

kernels::PackB columns_b(const float* x, const ConvGeometry& g) {
  auto src = std::make_shared<const PaddedSource>(x, g);
  return [src](int k0, int kc, int n0, int nc, int nr, float* out) {
    const float* xp = src->padded.data();
    const int step = src->g.stride.w;
    Run runs[64];
    for (int j0 = 0; j0 < nc; j0 += nr) {
      const int cols = std::min(nr, nc - j0);
      float* strip = out + static_cast<std::size_t>(j0) * kc;
      const int nrun = split_runs(*src, n0 + j0, cols, runs);
      for (int r = 0; r < kc; ++r) {
        float* dst = strip + static_cast<std::size_t>(r) * nr;
        const float* row = xp + src->tap[k0 + r];
        for (int i = 0; i < nrun; ++i) {
          copy_run(dst + runs[i].offset, row + runs[i].base, runs[i].length, step);
        }
        for (int j = cols; j < nr; ++j) dst[j] = 0.0f;
      }
    }
  };
}

kernels::PackB columns_t_b(const float* x, const ConvGeometry& g) {
  auto src = std::make_shared<const PaddedSource>(x, g);
  return [src](int k0, int kc, int n0, int nc, int nr, float* out) {
    const float* xp = src->padded.data();
    const int step = src->g.stride.w;
    std::vector<Run> runs(static_cast<std::size_t>(kc));
    const int nrun = split_runs(*src, k0, kc, runs.data());
    std::vector<std::ptrdiff_t> pos(static_cast<std::size_t>(kc));
    for (int i = 0; i < nrun; ++i) {
      for (int t = 0; t < runs[i].length; ++t) {
        pos[runs[i].offset + t] = runs[i].base + static_cast<std::ptrdiff_t>(t) * step;
      }
    }
    for (int j0 = 0; j0 < nc; j0 += nr) {
      const int cols = std::min(nr, nc - j0);
      float* strip = out + static_cast<std::size_t>(j0) * kc;
      const std::ptrdiff_t* taps = src->tap.data() + n0 + j0;
      for (int q = 0; q < kc; ++q) {
        float* dst = strip + static_cast<std::size_t>(q) * nr;
        const float* at = xp + pos[q];
        for (int j = 0; j < cols; ++j) dst[j] = at[taps[j]];
        for (int j = cols; j < nr; ++j) dst[j] = 0.0f;
      }
    }
  };
}

// ---------------------------------------------------------------- Conv3d

Conv3d::Conv3d(std::string name, int in_channels, int out_channels, Triple kernel, Triple stride,
               Triple pad, bool bias)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      has_bias_(bias),
      weight_(name + ".weight", {out_channels, in_channels, kernel.d, kernel.h, kernel.w}) {
  if (bias) bias_ = Parameter(name + ".bias", {out_channels});
}

ConvGeometry Conv3d::geometry(const Dims3& in) const {
  ConvGeometry g{in_channels_, in, kernel_, stride_, pad_, conv_output_dims(in, kernel_, stride_, pad_)};
  if (g.out.depth < 1 || g.out.height < 1 || g.out.width < 1) {
    throw ShapeError(weight_.name + ": input " + to_string(in) + " too small for kernel");
  }
  return g;
}

Tensor Conv3d::forward(const Tensor& x, bool keep) {
  check_rank5(x, in_channels_, weight_.name.c_str());
  const ConvGeometry g = geometry(spatial(x));
  const int batch = x.dim(0);
  const int rows = g.rows();
  const int positions = g.positions();
  Tensor y({batch, out_channels_, g.out.depth, g.out.height, g.out.width});
  const std::size_t in_stride = static_cast<std::size_t>(in_channels_) * g.in.size();
  const std::size_t out_stride = static_cast<std::size_t>(out_channels_) * positions;
  const PackedA w(Trans::no, out_channels_, rows, weight_.value.data(), rows);
  for (int b = 0; b < batch; ++b) {
    const float* xb = x.data() + b * in_stride;
    float* yb = y.data() + b * out_stride;
    sgemm_packed(w, positions, 1.0f,
                 g.is_pointwise() ? matrix_b(Trans::no, xb, positions) : columns_b(xb, g), 0.0f,
                 yb, positions);
    if (has_bias_) add_bias(yb, bias_, out_channels_, positions);
  }
  if (keep) input_ = x;
  return y;
}

Tensor Conv3d::backward(const Tensor& dy, bool need_dx) {
  if (input_.empty()) throw ShapeError(weight_.name + ": backward without cached input");
  const Tensor& x = input_;
  const ConvGeometry g = geometry(spatial(x));
  const int batch = x.dim(0);
  const int rows = g.rows();
  const int positions = g.positions();
  if (dy.rank() != 5 || dy.dim(0) != batch || dy.dim(1) != out_channels_ ||
      spatial(dy) != g.out) {
    throw ShapeError(weight_.name + ": gradient shape " + shape_string(dy.shape()) +
                     " does not match output");
  }
  const std::size_t in_stride = static_cast<std::size_t>(in_channels_) * g.in.size();
  const std::size_t out_stride = static_cast<std::size_t>(out_channels_) * positions;

  if (weight_.trainable || (has_bias_ && bias_.trainable)) {
    for (int b = 0; b < batch; ++b) {
      const float* xb = x.data() + b * in_stride;
      const float* dyb = dy.data() + b * out_stride;
      if (has_bias_ && bias_.trainable) accumulate_bias_grad(dyb, bias_, out_channels_, positions);
      if (!weight_.trainable) continue;
      const PackedA dya(Trans::no, out_channels_, positions, dyb, positions);
      sgemm_packed(dya, rows, 1.0f,
                   g.is_pointwise() ? matrix_b(Trans::yes, xb, positions) : columns_t_b(xb, g),
                   1.0f, weight_.grad.data(), rows);
    }
  }
  if (!need_dx) return Tensor();

  Tensor dx(x.shape(), 0.0f);
  const int in_positions = static_cast<int>(g.in.size());
  if (g.is_pointwise()) {
    const PackedA wt(Trans::yes, in_channels_, out_channels_, weight_.value.data(), rows);
    for (int b = 0; b < batch; ++b) {
      sgemm_packed(wt, positions, 1.0f, matrix_b(Trans::no, dy.data() + b * out_stride, positions),
                   0.0f, dx.data() + b * in_stride, positions);
    }
  } else if (has_correlation_adjoint(kernel_, stride_, pad_)) {
    const std::vector<float> wf = flip_swap(weight_.value.data(), out_channels_, in_channels_, kernel_);
    const int depth = out_channels_ * g.kernel_volume();
    const PackedA wa(Trans::no, in_channels_, depth, wf.data(), depth);
    const ConvGeometry ga{out_channels_, g.out, kernel_, Triple{1, 1, 1}, adjoint_pad(kernel_, pad_),
                          g.in};
    for (int b = 0; b < batch; ++b) {
      sgemm_packed(wa, in_positions, 1.0f, columns_b(dy.data() + b * out_stride, ga), 0.0f,
                   dx.data() + b * in_stride, in_positions);
    }
  } else {
    const PackedA wt(Trans::yes, rows, out_channels_, weight_.value.data(), rows);
    const int chunk = chunk_positions(rows, positions);
    float* col = column_buffer(static_cast<std::size_t>(rows) * chunk);
    for (int b = 0; b < batch; ++b) {
      const float* dyb = dy.data() + b * out_stride;
      for (int p0 = 0; p0 < positions; p0 += chunk) {
        const int p1 = std::min(positions, p0 + chunk);
        sgemm_packed(wt, p1 - p0, 1.0f, matrix_b(Trans::no, dyb + p0, positions), 0.0f, col,
                     p1 - p0);
        col2im(col, g, p0, p1, dx.data() + b * in_stride);
      }
    }
  }
  return dx;
}

void Conv3d::init_kaiming(std::mt19937_64& rng) {
  kaiming(weight_, in_channels_ * kernel_.d * kernel_.h * kernel_.w, rng);
  if (has_bias_) bias_.value.fill(0.0f);
}

std::vector<Parameter*> Conv3d::parameters() {
  std::vector<Parameter*> out{&weight_};
  if (has_bias_) out.push_back(&bias_);
  return out;
}

// ------------------------------------------------------- ConvTranspose3d

ConvTranspose3d::ConvTranspose3d(std::string name, int in_channels, int out_channels,
                                 Triple kernel, Triple stride, Triple pad, bool bias)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      has_bias_(bias),
      weight_(name + ".weight", {in_channels, out_channels, kernel.d, kernel.h, kernel.w}) {
  if (bias) bias_ = Parameter(name + ".bias", {out_channels});
}

Triple ConvTranspose3d::output_padding_for(const Dims3& in, const Dims3& target) const {
  const Dims3 base = conv_transpose_output_dims(in, kernel_, stride_, pad_, Triple{0, 0, 0});
  const Triple op{target.depth - base.depth, target.height - base.height,
                  target.width - base.width};
  const bool ok = op.d >= 0 && op.d < stride_.d && op.h >= 0 && op.h < stride_.h && op.w >= 0 &&
                  op.w < stride_.w;
  if (!ok) {
    throw ShapeError(weight_.name + ": cannot upsample " + to_string(in) + " to " +
                     to_string(target) + " with stride (" + std::to_string(stride_.d) + ", " +
                     std::to_string(stride_.h) + ", " + std::to_string(stride_.w) + ")");
  }
  return op;
}

Tensor ConvTranspose3d::forward(const Tensor& x, const Dims3& target, bool keep) {
  check_rank5(x, in_channels_, weight_.name.c_str());
  const Dims3 in = spatial(x);
  output_padding_for(in, target);
  // The transposed convolution is the adjoint of a convolution over the
  // target grid whose output grid is `in`.
  const ConvGeometry g{out_channels_, target, kernel_, stride_, pad_, in};
  const int batch = x.dim(0);
  const int rows = g.rows();
  const int positions = g.positions();
  const int target_positions = static_cast<int>(target.size());
  Tensor y({batch, out_channels_, target.depth, target.height, target.width}, 0.0f);
  const std::size_t in_stride = static_cast<std::size_t>(in_channels_) * positions;
  const std::size_t out_stride = static_cast<std::size_t>(out_channels_) * target.size();
  if (has_correlation_adjoint(kernel_, stride_, pad_)) {
    const std::vector<float> wf = flip_swap(weight_.value.data(), in_channels_, out_channels_, kernel_);
    const int depth = in_channels_ * g.kernel_volume();
    const PackedA wa(Trans::no, out_channels_, depth, wf.data(), depth);
    const ConvGeometry ga{in_channels_, in, kernel_, Triple{1, 1, 1}, adjoint_pad(kernel_, pad_),
                          target};
    for (int b = 0; b < batch; ++b) {
      sgemm_packed(wa, target_positions, 1.0f, columns_b(x.data() + b * in_stride, ga), 0.0f,
                   y.data() + b * out_stride, target_positions);
    }
  } else {
    const PackedA wt(Trans::yes, rows, in_channels_, weight_.value.data(), rows);
    const int chunk = chunk_positions(rows, positions);
    float* col = column_buffer(static_cast<std::size_t>(rows) * chunk);
    for (int b = 0; b < batch; ++b) {
      const float* xb = x.data() + b * in_stride;
      for (int p0 = 0; p0 < positions; p0 += chunk) {
        const int p1 = std::min(positions, p0 + chunk);
        sgemm_packed(wt, p1 - p0, 1.0f, matrix_b(Trans::no, xb + p0, positions), 0.0f, col,
                     p1 - p0);
        col2im(col, g, p0, p1, y.data() + b * out_stride);
      }
    }
  }
  if (has_bias_) {
    for (int b = 0; b < batch; ++b) {
      add_bias(y.data() + b * out_stride, bias_, out_channels_, target.size());
    }
  }
  if (keep) {
    input_ = x;
    target_ = target;
  }
  return y;
}

Tensor ConvTranspose3d::backward(const Tensor& dy, bool need_dx) {
  if (input_.empty()) throw ShapeError(weight_.name + ": backward without cached input");
  const Tensor& x = input_;
  const Dims3 in = spatial(x);
  const ConvGeometry g{out_channels_, target_, kernel_, stride_, pad_, in};
  const int batch = x.dim(0);
  const int rows = g.rows();
  const int positions = g.positions();
  if (dy.rank() != 5 || dy.dim(0) != batch || dy.dim(1) != out_channels_ || spatial(dy) != target_) {
    throw ShapeError(weight_.name + ": gradient shape " + shape_string(dy.shape()) +
                     " does not match output");
  }
  const std::size_t in_stride = static_cast<std::size_t>(in_channels_) * positions;
  const std::size_t out_stride = static_cast<std::size_t>(out_channels_) * target_.size();
  for (int b = 0; b < batch; ++b) {
    const float* xb = x.data() + b * in_stride;
    const float* dyb = dy.data() + b * out_stride;
    if (has_bias_ && bias_.trainable) {
      accumulate_bias_grad(dyb, bias_, out_channels_, target_.size());
    }
    if (weight_.trainable) {
      const PackedA xa(Trans::no, in_channels_, positions, xb, positions);
      sgemm_packed(xa, rows, 1.0f, columns_t_b(dyb, g), 1.0f, weight_.grad.data(), rows);
    }
  }
  if (!need_dx) return Tensor();
  Tensor dx(x.shape(), 0.0f);
  const PackedA w(Trans::no, in_channels_, rows, weight_.value.data(), rows);
  for (int b = 0; b < batch; ++b) {
    sgemm_packed(w, positions, 1.0f, columns_b(dy.data() + b * out_stride, g), 0.0f,
                 dx.data() + b * in_stride, positions);
  }
  return dx;
}

void ConvTranspose3d::init_kaiming(std::mt19937_64& rng) {
  kaiming(weight_, out_channels_ * kernel_.d * kernel_.h * kernel_.w, rng);
  if (has_bias_) bias_.value.fill(0.0f);
}

std::vector<Parameter*> ConvTranspose3d::parameters() {
  std::vector<Parameter*> out{&weight_};
  if (has_bias_) out.push_back(&bias_);
  return out;
}

}  // namespace covseg::nn
