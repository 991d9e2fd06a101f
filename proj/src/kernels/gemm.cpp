#include "covseg/kernels/gemm.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "micro_kernels.hpp"

namespace covseg::kernels {

namespace {

constexpr int kBlockK = 256;
constexpr int kBlockN = 4096;
constexpr int kTargetBlockM = 192;

detail::MicroKernel kernel_for(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("sgemm: unsupported kernel variant " +
                                std::string(isa_name(isa)));
  }
  switch (isa) {
    case Isa::avx2: return detail::avx2_micro_kernel();
    case Isa::avx512: return detail::avx512_micro_kernel();
    case Isa::scalar: break;
  }
  return detail::scalar_micro_kernel();
}

// Packs op(A)[0:m, pc:pc+kc] into mr-row strips, zero-padding the tail.
void pack_a(Trans trans, const float* a, int lda, int m, int pc, int kc, int mr, float* out) {
  for (int i0 = 0; i0 < m; i0 += mr) {
    const int rows = std::min(mr, m - i0);
    float* strip = out + static_cast<std::size_t>(i0) * kc;
    if (rows < mr) std::fill(strip, strip + static_cast<std::size_t>(kc) * mr, 0.0f);
    if (trans == Trans::no) {
      for (int i = 0; i < rows; ++i) {
        const float* src = a + static_cast<std::size_t>(i0 + i) * lda + pc;
        for (int p = 0; p < kc; ++p) strip[p * mr + i] = src[p];
      }
    } else {
      for (int p = 0; p < kc; ++p) {
        const float* src = a + static_cast<std::size_t>(pc + p) * lda + i0;
        float* dst = strip + static_cast<std::size_t>(p) * mr;
        for (int i = 0; i < rows; ++i) dst[i] = src[i];
      }
    }
  }
}

void pack_b(Trans trans, const float* b, int ldb, int pc, int kc, int jc, int nc, int nr,
            float* out) {
  for (int j0 = 0; j0 < nc; j0 += nr) {
    const int cols = std::min(nr, nc - j0);
    float* strip = out + static_cast<std::size_t>(j0) * kc;
    if (trans == Trans::no) {
      for (int p = 0; p < kc; ++p) {
        const float* src = b + static_cast<std::size_t>(pc + p) * ldb + jc + j0;
        float* dst = strip + static_cast<std::size_t>(p) * nr;
        std::memcpy(dst, src, sizeof(float) * cols);
        for (int j = cols; j < nr; ++j) dst[j] = 0.0f;
      }
    } else {
      if (cols < nr) std::fill(strip, strip + static_cast<std::size_t>(kc) * nr, 0.0f);
      for (int j = 0; j < cols; ++j) {
        const float* src = b + static_cast<std::size_t>(jc + j0 + j) * ldb + pc;
        for (int p = 0; p < kc; ++p) strip[p * nr + j] = src[p];
      }
    }
  }
}

void scale_c(int m, int n, float beta, float* c, int ldc) {
  if (beta == 1.0f) return;
  for (int i = 0; i < m; ++i) {
    float* row = c + static_cast<std::size_t>(i) * ldc;
    if (beta == 0.0f) {
      std::fill(row, row + n, 0.0f);
    } else {
      for (int j = 0; j < n; ++j) row[j] *= beta;
    }
  }
}

}  // namespace

int PackedA::block_k() noexcept { return kBlockK; }

PackedA::PackedA(Trans trans, int m, int k, const float* a, int lda)
    : PackedA(active_isa(), trans, m, k, a, lda) {}

PackedA::PackedA(Isa isa, Trans trans, int m, int k, const float* a, int lda)
    : isa_(isa), m_(m), k_(k) {
  if (m < 0 || k < 0) throw std::invalid_argument("PackedA: negative dimension");
  mr_ = kernel_for(isa).mr;
  padded_m_ = (m + mr_ - 1) / mr_ * mr_;
  data_.resize(static_cast<std::size_t>(padded_m_) * k);
  for (int pc = 0; pc < k; pc += kBlockK) {
    const int kc = std::min(kBlockK, k - pc);
    pack_a(trans, a, lda, m, pc, kc, mr_, data_.data() + static_cast<std::size_t>(padded_m_) * pc);
  }
}

PackB matrix_b(Trans trans, const float* b, int ldb) {
  return [=](int k0, int kc, int n0, int nc, int nr, float* out) {
    pack_b(trans, b, ldb, k0, kc, n0, nc, nr, out);
  };
}

void sgemm_packed(const PackedA& a, int n, float alpha, const PackB& b, float beta, float* c,
                  int ldc) {
  const int m = a.rows();
  const int k = a.depth();
  if (n < 0) throw std::invalid_argument("sgemm: negative dimension");
  if (m == 0 || n == 0) return;
  scale_c(m, n, beta, c, ldc);
  if (k == 0 || alpha == 0.0f) return;

  const detail::MicroKernel uk = kernel_for(a.isa());
  const int block_m = std::max(uk.mr, (kTargetBlockM / uk.mr) * uk.mr);

  thread_local std::vector<float> b_pack;
  const int nc_max = std::min(n, kBlockN);
  const int kc_max = std::min(k, kBlockK);
  b_pack.resize(static_cast<std::size_t>((nc_max + uk.nr - 1) / uk.nr) * uk.nr * kc_max);

  float edge[32 * 32];

  for (int jc = 0; jc < n; jc += kBlockN) {
    const int nc = std::min(kBlockN, n - jc);
    for (int pc = 0; pc < k; pc += kBlockK) {
      const int kc = std::min(kBlockK, k - pc);
      b(pc, kc, jc, nc, uk.nr, b_pack.data());
      for (int ic = 0; ic < m; ic += block_m) {
        const int mc = std::min(block_m, m - ic);
        const float* a_block = a.block(pc, ic);
        for (int jr = 0; jr < nc; jr += uk.nr) {
          const int cols = std::min(uk.nr, nc - jr);
          const float* bp = b_pack.data() + static_cast<std::size_t>(jr) * kc;
          for (int ir = 0; ir < mc; ir += uk.mr) {
            const int rows = std::min(uk.mr, mc - ir);
            const float* ap = a_block + static_cast<std::size_t>(ir) * kc;
            float* ct = c + static_cast<std::size_t>(ic + ir) * ldc + jc + jr;
            if (rows == uk.mr && cols == uk.nr) {
              uk.run(kc, ap, bp, ct, ldc, alpha);
            } else {
              std::fill(edge, edge + uk.mr * uk.nr, 0.0f);
              uk.run(kc, ap, bp, edge, uk.nr, alpha);
              for (int i = 0; i < rows; ++i) {
                float* crow = ct + static_cast<std::size_t>(i) * ldc;
                const float* erow = edge + i * uk.nr;
                for (int j = 0; j < cols; ++j) crow[j] += erow[j];
              }
            }
          }
        }
      }
    }
  }
}

void sgemm(Isa isa, Trans trans_a, Trans trans_b, int m, int n, int k, float alpha,
           const float* a, int lda, const float* b, int ldb, float beta, float* c,
           int ldc) {
  if (m < 0 || n < 0 || k < 0) throw std::invalid_argument("sgemm: negative dimension");
  if (m == 0 || n == 0) return;
  if (k == 0 || alpha == 0.0f) {
    scale_c(m, n, beta, c, ldc);
    return;
  }
  const PackedA packed(isa, trans_a, m, k, a, lda);
  sgemm_packed(packed, n, alpha, matrix_b(trans_b, b, ldb), beta, c, ldc);
}

void sgemm(Trans trans_a, Trans trans_b, int m, int n, int k, float alpha, const float* a,
           int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  sgemm(active_isa(), trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace covseg::kernels
