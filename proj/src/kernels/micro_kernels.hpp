#pragma once

// Register-tile kernels shared by the GEMM driver. Each variant lives in its
// own translation unit compiled with the matching target flags.

namespace covseg::kernels::detail {

// C[mr x nr] += alpha * Apack[kc x mr]^T * Bpack[kc x nr]
// Apack is k-major with mr floats per step, Bpack k-major with nr floats.
using MicroKernelFn = void (*)(int kc, const float* a, const float* b, float* c,
                               int ldc, float alpha);

struct MicroKernel {
  int mr;
  int nr;
  MicroKernelFn run;
};

MicroKernel scalar_micro_kernel() noexcept;
MicroKernel avx2_micro_kernel() noexcept;
MicroKernel avx512_micro_kernel() noexcept;

}  // namespace covseg::kernels::detail
