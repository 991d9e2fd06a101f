#include <cmath>
#include <random>
#include <vector>

#include "covseg/kernels/gemm.hpp"
#include "covseg/kernels/vector_ops.hpp"
#include "doctest.h"

using namespace covseg::kernels;

namespace {

std::vector<Isa> supported_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::avx512}) {
    if (isa_supported(isa)) out.push_back(isa);
  }
  return out;
}

// Textbook triple loop in double; the reference all variants are held to.
std::vector<double> naive_gemm(Trans ta, Trans tb, int m, int n, int k, float alpha,
                               const std::vector<float>& a, int lda,
                               const std::vector<float>& b, int ldb, float beta,
                               const std::vector<float>& c, int ldc) {
  std::vector<double> out(c.begin(), c.end());
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        const double av = ta == Trans::no ? a[i * lda + p] : a[p * lda + i];
        const double bv = tb == Trans::no ? b[p * ldb + j] : b[j * ldb + p];
        acc += av * bv;
      }
      const double prev = beta == 0.0f ? 0.0 : beta * static_cast<double>(c[i * ldc + j]);
      out[i * ldc + j] = alpha * acc + prev;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("every sgemm variant matches the naive reference") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::uniform_int_distribution<int> dim(1, 70);
  for (int trial = 0; trial < 40; ++trial) {
    const int m = dim(rng), n = dim(rng), k = trial % 5 == 0 ? 300 : dim(rng);
    const Trans ta = trial % 2 ? Trans::yes : Trans::no;
    const Trans tb = (trial / 2) % 2 ? Trans::yes : Trans::no;
    const int lda = (ta == Trans::no ? k : m) + trial % 3;
    const int ldb = (tb == Trans::no ? n : k) + trial % 4;
    const int ldc = n + trial % 2;
    std::vector<float> a(static_cast<std::size_t>(lda) * (ta == Trans::no ? m : k));
    std::vector<float> b(static_cast<std::size_t>(ldb) * (tb == Trans::no ? k : n));
    std::vector<float> c(static_cast<std::size_t>(ldc) * m);
    for (auto& x : a) x = u(rng);
    for (auto& x : b) x = u(rng);
    for (auto& x : c) x = u(rng);
    const float alpha = trial % 3 == 0 ? 1.0f : 0.75f;
    const float beta = trial % 4 == 0 ? 0.0f : (trial % 4 == 1 ? 1.0f : -0.5f);
    const auto expect = naive_gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    for (Isa isa : supported_isas()) {
      CAPTURE(isa_name(isa));
      std::vector<float> got = c;
      sgemm(isa, ta, tb, m, n, k, alpha, a.data(), lda, b.data(), ldb, beta, got.data(), ldc);
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
          REQUIRE(got[i * ldc + j] == doctest::Approx(expect[i * ldc + j]).epsilon(1e-4).scale(1.0));
        }
        // padding columns beyond n are untouched
        for (int j = n; j < ldc; ++j) REQUIRE(got[i * ldc + j] == c[i * ldc + j]);
      }
    }
  }
}

TEST_CASE("sgemm with beta zero ignores NaN in the destination") {
  std::vector<float> a{1, 2, 3, 4}, b{1, 0, 0, 1};
  for (Isa isa : supported_isas()) {
    std::vector<float> c(4, std::nanf(""));
    sgemm(isa, Trans::no, Trans::no, 2, 2, 2, 1.0f, a.data(), 2, b.data(), 2, 0.0f, c.data(), 2);
    CHECK(c == std::vector<float>{1, 2, 3, 4});
  }
}

TEST_CASE("sgemm with k == 0 only scales C") {
  std::vector<float> c{1, 2, 3};
  sgemm(Trans::no, Trans::no, 1, 3, 0, 1.0f, nullptr, 1, nullptr, 3, 2.0f, c.data(), 3);
  CHECK(c == std::vector<float>{2, 4, 6});
}

TEST_CASE("SIMD vector kernels agree with scalar") {
  std::mt19937 rng(11);
  std::normal_distribution<float> g(0.0f, 2.0f);
  for (std::size_t n : {0u, 1u, 7u, 8u, 15u, 16u, 33u, 1000u, 4097u}) {
    std::vector<float> x(n), y(n);
    for (auto& v : x) v = g(rng);
    for (auto& v : y) v = g(rng);
    const Moments ref = moments(Isa::scalar, x);
    const double ref_dot = dot(Isa::scalar, x, y);
    for (Isa isa : supported_isas()) {
      CAPTURE(isa_name(isa));
      const Moments mm = moments(isa, x);
      CHECK(mm.sum == doctest::Approx(ref.sum).epsilon(1e-12).scale(1.0));
      CHECK(mm.sum_sq == doctest::Approx(ref.sum_sq).epsilon(1e-12));
      CHECK(dot(isa, x, y) == doctest::Approx(ref_dot).epsilon(1e-12).scale(1.0));
    }
  }
}

TEST_CASE("AdamW update variants agree with scalar and with the closed form") {
  std::mt19937 rng(3);
  std::normal_distribution<float> g(0.0f, 1.0f);
  const std::size_t n = 1031;
  std::vector<float> p0(n), grad(n), m0(n), v0(n);
  for (std::size_t i = 0; i < n; ++i) {
    p0[i] = g(rng);
    grad[i] = g(rng);
    m0[i] = 0.1f * g(rng);
    v0[i] = std::abs(g(rng));
  }
  AdamWStep s;
  s.lr = 0.01f;
  s.weight_decay = 0.1f;
  s.bias_correction1 = 1.0f - 0.9f * 0.9f;
  s.bias_correction2 = 1.0f - 0.99f * 0.99f;

  // closed form in double for element 0
  {
    const double m = 0.9 * m0[0] + 0.1 * grad[0];
    const double v = 0.99 * v0[0] + 0.01 * grad[0] * grad[0];
    const double expect = p0[0] * (1.0 - 0.01 * 0.1) -
                          0.01 * (m / s.bias_correction1) /
                              (std::sqrt(v / s.bias_correction2) + 1e-5);
    auto p = p0, m1 = m0, v1 = v0;
    adamw_update(Isa::scalar, p, grad, m1, v1, s);
    CHECK(p[0] == doctest::Approx(expect).epsilon(1e-5));
  }

  auto p_ref = p0, m_ref = m0, v_ref = v0;
  adamw_update(Isa::scalar, p_ref, grad, m_ref, v_ref, s);
  for (Isa isa : supported_isas()) {
    auto p = p0, m1 = m0, v1 = v0;
    adamw_update(isa, p, grad, m1, v1, s);
    for (std::size_t i = 0; i < n; ++i) {
      REQUIRE(p[i] == doctest::Approx(p_ref[i]).epsilon(1e-5).scale(1.0));
      REQUIRE(m1[i] == doctest::Approx(m_ref[i]).epsilon(1e-6).scale(1.0));
      REQUIRE(v1[i] == doctest::Approx(v_ref[i]).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("active variant can be pinned and restored") {
  const Isa before = active_isa();
  {
    ScopedIsa pin(Isa::scalar);
    CHECK(active_isa() == Isa::scalar);
  }
  CHECK(active_isa() == before);
}
