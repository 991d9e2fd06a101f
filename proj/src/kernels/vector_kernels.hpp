#pragma once

#include <cstddef>

#include "covseg/kernels/vector_ops.hpp"

namespace covseg::kernels::detail {

struct VectorKernels {
  Moments (*moments)(const float* x, std::size_t n);
  double (*dot)(const float* x, const float* y, std::size_t n);
  void (*adamw)(float* p, const float* g, float* m, float* v, std::size_t n,
                const AdamWStep& s);
};

VectorKernels scalar_vector_kernels() noexcept;
VectorKernels avx2_vector_kernels() noexcept;
VectorKernels avx512_vector_kernels() noexcept;

}  // namespace covseg::kernels::detail
