#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "covseg/kernels/isa.hpp"

namespace covseg::kernels {

enum class Trans { no, yes };

// Row-major single-precision GEMM:
//   C[m x n] = alpha * op(A)[m x k] * op(B)[k x n] + beta * C
// op(A) is A (m x k, leading dimension lda) or A^T (A stored k x m).
// beta == 0 overwrites C without reading it.
void sgemm(Trans trans_a, Trans trans_b, int m, int n, int k, float alpha,
           const float* a, int lda, const float* b, int ldb, float beta,
           float* c, int ldc);

// Same, forced onto one variant. Used by equivalence tests and benchmarks.
void sgemm(Isa isa, Trans trans_a, Trans trans_b, int m, int n, int k,
           float alpha, const float* a, int lda, const float* b, int ldb,
           float beta, float* c, int ldc);

// op(A) packed once in the register-tile layout of one variant, reusable
// across products that share the left operand.
class PackedA {
 public:
  PackedA(Trans trans, int m, int k, const float* a, int lda);
  PackedA(Isa isa, Trans trans, int m, int k, const float* a, int lda);

  Isa isa() const noexcept { return isa_; }
  int rows() const noexcept { return m_; }
  int depth() const noexcept { return k_; }
  // Strips for rows [ic, ...) and depth block starting at pc.
  const float* block(int pc, int ic) const noexcept {
    return data_.data() + static_cast<std::size_t>(padded_m_) * pc +
           static_cast<std::size_t>(ic) * std::min(k_ - pc, block_k());
  }
  static int block_k() noexcept;

 private:
  Isa isa_;
  int m_, k_, mr_, padded_m_;
  std::vector<float> data_;
};

// Produces op(B)[k0:k0+kc, n0:n0+nc] directly in packed form: column strips
// of width nr, strip s at out + s*kc*nr, k-major inside a strip
// (out[s*kc*nr + p*nr + j]). Columns past nc in the last strip must be zero.
using PackB = std::function<void(int k0, int kc, int n0, int nc, int nr, float* out)>;

// Packer for an ordinary row-major matrix operand.
PackB matrix_b(Trans trans, const float* b, int ldb);

// C[m x n] = alpha * A * B + beta * C with a prepacked A and a B packer.
void sgemm_packed(const PackedA& a, int n, float alpha, const PackB& b, float beta,
                  float* c, int ldc);

}  // namespace covseg::kernels
