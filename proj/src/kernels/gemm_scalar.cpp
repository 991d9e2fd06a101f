#include "micro_kernels.hpp"

namespace covseg::kernels::detail {

namespace {

constexpr int kMr = 4;
constexpr int kNr = 8;

void run_scalar(int kc, const float* a, const float* b, float* c, int ldc, float alpha) {
  float acc[kMr][kNr] = {};
  for (int p = 0; p < kc; ++p) {
    const float* ap = a + p * kMr;
    const float* bp = b + p * kNr;
    for (int i = 0; i < kMr; ++i) {
      for (int j = 0; j < kNr; ++j) acc[i][j] += ap[i] * bp[j];
    }
  }
  for (int i = 0; i < kMr; ++i) {
    for (int j = 0; j < kNr; ++j) c[i * ldc + j] += alpha * acc[i][j];
  }
}

}  // namespace

MicroKernel scalar_micro_kernel() noexcept { return {kMr, kNr, &run_scalar}; }

}  // namespace covseg::kernels::detail
