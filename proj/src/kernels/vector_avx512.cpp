// Compiled with -mavx512f -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include <cmath>

#include "vector_kernels.hpp"

namespace covseg::kernels::detail {

namespace {

Moments moments_avx512(const float* x, std::size_t n) {
  __m512d s0 = _mm512_setzero_pd(), s1 = _mm512_setzero_pd();
  __m512d q0 = _mm512_setzero_pd(), q1 = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 v = _mm512_loadu_ps(x + i);
    const __m512d lo = _mm512_cvtps_pd(_mm512_castps512_ps256(v));
    const __m512d hi = _mm512_cvtps_pd(
        _mm256_castpd_ps(_mm512_extractf64x4_pd(_mm512_castps_pd(v), 1)));
    s0 = _mm512_add_pd(s0, lo);
    s1 = _mm512_add_pd(s1, hi);
    q0 = _mm512_fmadd_pd(lo, lo, q0);
    q1 = _mm512_fmadd_pd(hi, hi, q1);
  }
  Moments out{_mm512_reduce_add_pd(_mm512_add_pd(s0, s1)),
              _mm512_reduce_add_pd(_mm512_add_pd(q0, q1))};
  for (; i < n; ++i) {
    const double v = x[i];
    out.sum += v;
    out.sum_sq += v * v;
  }
  return out;
}

double dot_avx512(const float* x, const float* y, std::size_t n) {
  __m512d a0 = _mm512_setzero_pd(), a1 = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 vx = _mm512_loadu_ps(x + i);
    const __m512 vy = _mm512_loadu_ps(y + i);
    const __m256 xhi = _mm256_castpd_ps(_mm512_extractf64x4_pd(_mm512_castps_pd(vx), 1));
    const __m256 yhi = _mm256_castpd_ps(_mm512_extractf64x4_pd(_mm512_castps_pd(vy), 1));
    a0 = _mm512_fmadd_pd(_mm512_cvtps_pd(_mm512_castps512_ps256(vx)),
                         _mm512_cvtps_pd(_mm512_castps512_ps256(vy)), a0);
    a1 = _mm512_fmadd_pd(_mm512_cvtps_pd(xhi), _mm512_cvtps_pd(yhi), a1);
  }
  double acc = _mm512_reduce_add_pd(_mm512_add_pd(a0, a1));
  for (; i < n; ++i) acc += static_cast<double>(x[i]) * y[i];
  return acc;
}

void adamw_avx512(float* p, const float* g, float* m, float* v, std::size_t n,
                  const AdamWStep& s) {
  const float decay = 1.0f - s.lr * s.weight_decay;
  const float step = s.lr / s.bias_correction1;
  const float inv_bc2 = 1.0f / s.bias_correction2;
  const __m512 vb1 = _mm512_set1_ps(s.beta1), vb1c = _mm512_set1_ps(1.0f - s.beta1);
  const __m512 vb2 = _mm512_set1_ps(s.beta2), vb2c = _mm512_set1_ps(1.0f - s.beta2);
  const __m512 vdecay = _mm512_set1_ps(decay), vstep = _mm512_set1_ps(step);
  const __m512 vbc2 = _mm512_set1_ps(inv_bc2), veps = _mm512_set1_ps(s.eps);
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 gi = _mm512_loadu_ps(g + i);
    const __m512 mi = _mm512_add_ps(_mm512_mul_ps(vb1, _mm512_loadu_ps(m + i)),
                                    _mm512_mul_ps(vb1c, gi));
    const __m512 vi = _mm512_add_ps(_mm512_mul_ps(vb2, _mm512_loadu_ps(v + i)),
                                    _mm512_mul_ps(_mm512_mul_ps(vb2c, gi), gi));
    _mm512_storeu_ps(m + i, mi);
    _mm512_storeu_ps(v + i, vi);
    const __m512 denom = _mm512_add_ps(_mm512_sqrt_ps(_mm512_mul_ps(vi, vbc2)), veps);
    const __m512 upd = _mm512_div_ps(_mm512_mul_ps(vstep, mi), denom);
    _mm512_storeu_ps(p + i, _mm512_sub_ps(_mm512_mul_ps(_mm512_loadu_ps(p + i), vdecay), upd));
  }
  for (; i < n; ++i) {
    m[i] = s.beta1 * m[i] + (1.0f - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0f - s.beta2) * g[i] * g[i];
    const float denom = std::sqrt(v[i] * inv_bc2) + s.eps;
    p[i] = p[i] * decay - step * m[i] / denom;
  }
}

}  // namespace

VectorKernels avx512_vector_kernels() noexcept {
  return {&moments_avx512, &dot_avx512, &adamw_avx512};
}

}  // namespace covseg::kernels::detail
