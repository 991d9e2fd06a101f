#include "covseg/kernels/vector_ops.hpp"

#include <stdexcept>
#include <string>

#include "vector_kernels.hpp"

namespace covseg::kernels {

namespace {

detail::VectorKernels kernels_for(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("unsupported kernel variant " + std::string(isa_name(isa)));
  }
  switch (isa) {
    case Isa::avx2: return detail::avx2_vector_kernels();
    case Isa::avx512: return detail::avx512_vector_kernels();
    case Isa::scalar: break;
  }
  return detail::scalar_vector_kernels();
}

}  // namespace

Moments moments(Isa isa, std::span<const float> x) {
  return kernels_for(isa).moments(x.data(), x.size());
}

Moments moments(std::span<const float> x) { return moments(active_isa(), x); }

double dot(Isa isa, std::span<const float> x, std::span<const float> y) {
  if (x.size() != y.size()) throw std::invalid_argument("dot: length mismatch");
  return kernels_for(isa).dot(x.data(), y.data(), x.size());
}

double dot(std::span<const float> x, std::span<const float> y) {
  return dot(active_isa(), x, y);
}

void adamw_update(Isa isa, std::span<float> param, std::span<const float> grad,
                  std::span<float> m, std::span<float> v, const AdamWStep& s) {
  const std::size_t n = param.size();
  if (grad.size() != n || m.size() != n || v.size() != n) {
    throw std::invalid_argument("adamw_update: length mismatch");
  }
  kernels_for(isa).adamw(param.data(), grad.data(), m.data(), v.data(), n, s);
}

void adamw_update(std::span<float> param, std::span<const float> grad, std::span<float> m,
                  std::span<float> v, const AdamWStep& s) {
  adamw_update(active_isa(), param, grad, m, v, s);
}

}  // namespace covseg::kernels
