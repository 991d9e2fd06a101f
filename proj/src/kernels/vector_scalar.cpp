#include <cmath>

#include "vector_kernels.hpp"

namespace covseg::kernels::detail {

namespace {

Moments moments_scalar(const float* x, std::size_t n) {
  Moments out;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    out.sum += v;
    out.sum_sq += v * v;
  }
  return out;
}

double dot_scalar(const float* x, const float* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * y[i];
  return acc;
}

void adamw_scalar(float* p, const float* g, float* m, float* v, std::size_t n,
                  const AdamWStep& s) {
  const float decay = 1.0f - s.lr * s.weight_decay;
  const float step = s.lr / s.bias_correction1;
  const float inv_bc2 = 1.0f / s.bias_correction2;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = s.beta1 * m[i] + (1.0f - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0f - s.beta2) * g[i] * g[i];
    const float denom = std::sqrt(v[i] * inv_bc2) + s.eps;
    p[i] = p[i] * decay - step * m[i] / denom;
  }
}

}  // namespace

VectorKernels scalar_vector_kernels() noexcept {
  return {&moments_scalar, &dot_scalar, &adamw_scalar};
}

}  // namespace covseg::kernels::detail
