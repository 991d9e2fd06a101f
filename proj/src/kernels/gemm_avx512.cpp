// Compiled with -mavx512f -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include "micro_kernels.hpp"

namespace covseg::kernels::detail {

namespace {

constexpr int kMr = 12;
constexpr int kNr = 32;

// Accumulators are named scalars so they stay in registers.
void run_avx512(int kc, const float* a, const float* b, float* c, int ldc, float alpha) {
  __m512 c00 = _mm512_setzero_ps(), c01 = _mm512_setzero_ps();
  __m512 c10 = _mm512_setzero_ps(), c11 = _mm512_setzero_ps();
  __m512 c20 = _mm512_setzero_ps(), c21 = _mm512_setzero_ps();
  __m512 c30 = _mm512_setzero_ps(), c31 = _mm512_setzero_ps();
  __m512 c40 = _mm512_setzero_ps(), c41 = _mm512_setzero_ps();
  __m512 c50 = _mm512_setzero_ps(), c51 = _mm512_setzero_ps();
  __m512 c60 = _mm512_setzero_ps(), c61 = _mm512_setzero_ps();
  __m512 c70 = _mm512_setzero_ps(), c71 = _mm512_setzero_ps();
  __m512 c80 = _mm512_setzero_ps(), c81 = _mm512_setzero_ps();
  __m512 c90 = _mm512_setzero_ps(), c91 = _mm512_setzero_ps();
  __m512 c100 = _mm512_setzero_ps(), c101 = _mm512_setzero_ps();
  __m512 c110 = _mm512_setzero_ps(), c111 = _mm512_setzero_ps();
  for (int p = 0; p < kc; ++p) {
    const __m512 b0 = _mm512_loadu_ps(b);
    const __m512 b1 = _mm512_loadu_ps(b + 16);
    __m512 ai;
    ai = _mm512_set1_ps(a[0]);
    c00 = _mm512_fmadd_ps(ai, b0, c00);
    c01 = _mm512_fmadd_ps(ai, b1, c01);
    ai = _mm512_set1_ps(a[1]);
    c10 = _mm512_fmadd_ps(ai, b0, c10);
    c11 = _mm512_fmadd_ps(ai, b1, c11);
    ai = _mm512_set1_ps(a[2]);
    c20 = _mm512_fmadd_ps(ai, b0, c20);
    c21 = _mm512_fmadd_ps(ai, b1, c21);
    ai = _mm512_set1_ps(a[3]);
    c30 = _mm512_fmadd_ps(ai, b0, c30);
    c31 = _mm512_fmadd_ps(ai, b1, c31);
    ai = _mm512_set1_ps(a[4]);
    c40 = _mm512_fmadd_ps(ai, b0, c40);
    c41 = _mm512_fmadd_ps(ai, b1, c41);
    ai = _mm512_set1_ps(a[5]);
    c50 = _mm512_fmadd_ps(ai, b0, c50);
    c51 = _mm512_fmadd_ps(ai, b1, c51);
    ai = _mm512_set1_ps(a[6]);
    c60 = _mm512_fmadd_ps(ai, b0, c60);
    c61 = _mm512_fmadd_ps(ai, b1, c61);
    ai = _mm512_set1_ps(a[7]);
    c70 = _mm512_fmadd_ps(ai, b0, c70);
    c71 = _mm512_fmadd_ps(ai, b1, c71);
    ai = _mm512_set1_ps(a[8]);
    c80 = _mm512_fmadd_ps(ai, b0, c80);
    c81 = _mm512_fmadd_ps(ai, b1, c81);
    ai = _mm512_set1_ps(a[9]);
    c90 = _mm512_fmadd_ps(ai, b0, c90);
    c91 = _mm512_fmadd_ps(ai, b1, c91);
    ai = _mm512_set1_ps(a[10]);
    c100 = _mm512_fmadd_ps(ai, b0, c100);
    c101 = _mm512_fmadd_ps(ai, b1, c101);
    ai = _mm512_set1_ps(a[11]);
    c110 = _mm512_fmadd_ps(ai, b0, c110);
    c111 = _mm512_fmadd_ps(ai, b1, c111);
    a += kMr;
    b += kNr;
  }
  const __m512 va = _mm512_set1_ps(alpha);
  _mm512_storeu_ps(c + 0 * ldc, _mm512_fmadd_ps(va, c00, _mm512_loadu_ps(c + 0 * ldc)));
  _mm512_storeu_ps(c + 0 * ldc + 16, _mm512_fmadd_ps(va, c01, _mm512_loadu_ps(c + 0 * ldc + 16)));
  _mm512_storeu_ps(c + 1 * ldc, _mm512_fmadd_ps(va, c10, _mm512_loadu_ps(c + 1 * ldc)));
  _mm512_storeu_ps(c + 1 * ldc + 16, _mm512_fmadd_ps(va, c11, _mm512_loadu_ps(c + 1 * ldc + 16)));
  _mm512_storeu_ps(c + 2 * ldc, _mm512_fmadd_ps(va, c20, _mm512_loadu_ps(c + 2 * ldc)));
  _mm512_storeu_ps(c + 2 * ldc + 16, _mm512_fmadd_ps(va, c21, _mm512_loadu_ps(c + 2 * ldc + 16)));
  _mm512_storeu_ps(c + 3 * ldc, _mm512_fmadd_ps(va, c30, _mm512_loadu_ps(c + 3 * ldc)));
  _mm512_storeu_ps(c + 3 * ldc + 16, _mm512_fmadd_ps(va, c31, _mm512_loadu_ps(c + 3 * ldc + 16)));
  _mm512_storeu_ps(c + 4 * ldc, _mm512_fmadd_ps(va, c40, _mm512_loadu_ps(c + 4 * ldc)));
  _mm512_storeu_ps(c + 4 * ldc + 16, _mm512_fmadd_ps(va, c41, _mm512_loadu_ps(c + 4 * ldc + 16)));
  _mm512_storeu_ps(c + 5 * ldc, _mm512_fmadd_ps(va, c50, _mm512_loadu_ps(c + 5 * ldc)));
  _mm512_storeu_ps(c + 5 * ldc + 16, _mm512_fmadd_ps(va, c51, _mm512_loadu_ps(c + 5 * ldc + 16)));
  _mm512_storeu_ps(c + 6 * ldc, _mm512_fmadd_ps(va, c60, _mm512_loadu_ps(c + 6 * ldc)));
  _mm512_storeu_ps(c + 6 * ldc + 16, _mm512_fmadd_ps(va, c61, _mm512_loadu_ps(c + 6 * ldc + 16)));
  _mm512_storeu_ps(c + 7 * ldc, _mm512_fmadd_ps(va, c70, _mm512_loadu_ps(c + 7 * ldc)));
  _mm512_storeu_ps(c + 7 * ldc + 16, _mm512_fmadd_ps(va, c71, _mm512_loadu_ps(c + 7 * ldc + 16)));
  _mm512_storeu_ps(c + 8 * ldc, _mm512_fmadd_ps(va, c80, _mm512_loadu_ps(c + 8 * ldc)));
  _mm512_storeu_ps(c + 8 * ldc + 16, _mm512_fmadd_ps(va, c81, _mm512_loadu_ps(c + 8 * ldc + 16)));
  _mm512_storeu_ps(c + 9 * ldc, _mm512_fmadd_ps(va, c90, _mm512_loadu_ps(c + 9 * ldc)));
  _mm512_storeu_ps(c + 9 * ldc + 16, _mm512_fmadd_ps(va, c91, _mm512_loadu_ps(c + 9 * ldc + 16)));
  _mm512_storeu_ps(c + 10 * ldc, _mm512_fmadd_ps(va, c100, _mm512_loadu_ps(c + 10 * ldc)));
  _mm512_storeu_ps(c + 10 * ldc + 16, _mm512_fmadd_ps(va, c101, _mm512_loadu_ps(c + 10 * ldc + 16)));
  _mm512_storeu_ps(c + 11 * ldc, _mm512_fmadd_ps(va, c110, _mm512_loadu_ps(c + 11 * ldc)));
  _mm512_storeu_ps(c + 11 * ldc + 16, _mm512_fmadd_ps(va, c111, _mm512_loadu_ps(c + 11 * ldc + 16)));
}

}  // namespace

MicroKernel avx512_micro_kernel() noexcept { return {kMr, kNr, &run_avx512}; }

}  // namespace covseg::kernels::detail
