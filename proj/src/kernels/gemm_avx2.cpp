// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include "micro_kernels.hpp"

namespace covseg::kernels::detail {

namespace {

constexpr int kMr = 6;
constexpr int kNr = 16;

// Accumulators are named scalars so they stay in registers.
void run_avx2(int kc, const float* a, const float* b, float* c, int ldc, float alpha) {
  __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
  __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
  __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
  __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
  __m256 c40 = _mm256_setzero_ps(), c41 = _mm256_setzero_ps();
  __m256 c50 = _mm256_setzero_ps(), c51 = _mm256_setzero_ps();
  for (int p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_loadu_ps(b);
    const __m256 b1 = _mm256_loadu_ps(b + 8);
    __m256 ai;
    ai = _mm256_broadcast_ss(a + 0);
    c00 = _mm256_fmadd_ps(ai, b0, c00);
    c01 = _mm256_fmadd_ps(ai, b1, c01);
    ai = _mm256_broadcast_ss(a + 1);
    c10 = _mm256_fmadd_ps(ai, b0, c10);
    c11 = _mm256_fmadd_ps(ai, b1, c11);
    ai = _mm256_broadcast_ss(a + 2);
    c20 = _mm256_fmadd_ps(ai, b0, c20);
    c21 = _mm256_fmadd_ps(ai, b1, c21);
    ai = _mm256_broadcast_ss(a + 3);
    c30 = _mm256_fmadd_ps(ai, b0, c30);
    c31 = _mm256_fmadd_ps(ai, b1, c31);
    ai = _mm256_broadcast_ss(a + 4);
    c40 = _mm256_fmadd_ps(ai, b0, c40);
    c41 = _mm256_fmadd_ps(ai, b1, c41);
    ai = _mm256_broadcast_ss(a + 5);
    c50 = _mm256_fmadd_ps(ai, b0, c50);
    c51 = _mm256_fmadd_ps(ai, b1, c51);
    a += kMr;
    b += kNr;
  }
  const __m256 va = _mm256_set1_ps(alpha);
  _mm256_storeu_ps(c + 0 * ldc, _mm256_fmadd_ps(va, c00, _mm256_loadu_ps(c + 0 * ldc)));
  _mm256_storeu_ps(c + 0 * ldc + 8, _mm256_fmadd_ps(va, c01, _mm256_loadu_ps(c + 0 * ldc + 8)));
  _mm256_storeu_ps(c + 1 * ldc, _mm256_fmadd_ps(va, c10, _mm256_loadu_ps(c + 1 * ldc)));
  _mm256_storeu_ps(c + 1 * ldc + 8, _mm256_fmadd_ps(va, c11, _mm256_loadu_ps(c + 1 * ldc + 8)));
  _mm256_storeu_ps(c + 2 * ldc, _mm256_fmadd_ps(va, c20, _mm256_loadu_ps(c + 2 * ldc)));
  _mm256_storeu_ps(c + 2 * ldc + 8, _mm256_fmadd_ps(va, c21, _mm256_loadu_ps(c + 2 * ldc + 8)));
  _mm256_storeu_ps(c + 3 * ldc, _mm256_fmadd_ps(va, c30, _mm256_loadu_ps(c + 3 * ldc)));
  _mm256_storeu_ps(c + 3 * ldc + 8, _mm256_fmadd_ps(va, c31, _mm256_loadu_ps(c + 3 * ldc + 8)));
  _mm256_storeu_ps(c + 4 * ldc, _mm256_fmadd_ps(va, c40, _mm256_loadu_ps(c + 4 * ldc)));
  _mm256_storeu_ps(c + 4 * ldc + 8, _mm256_fmadd_ps(va, c41, _mm256_loadu_ps(c + 4 * ldc + 8)));
  _mm256_storeu_ps(c + 5 * ldc, _mm256_fmadd_ps(va, c50, _mm256_loadu_ps(c + 5 * ldc)));
  _mm256_storeu_ps(c + 5 * ldc + 8, _mm256_fmadd_ps(va, c51, _mm256_loadu_ps(c + 5 * ldc + 8)));
}

}  // namespace

MicroKernel avx2_micro_kernel() noexcept { return {kMr, kNr, &run_avx2}; }

}  // namespace covseg::kernels::detail
