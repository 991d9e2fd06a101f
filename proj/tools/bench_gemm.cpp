// Throughput probe for the GEMM variants on convolution-shaped problems.
#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "covseg/kernels/gemm.hpp"

using namespace covseg::kernels;

int main() {
  struct Case {
    int m, n, k;
  };
  const Case cases[] = {{64, 8192, 1728}, {128, 1024, 3456}, {1728, 8192, 64}, {64, 1728, 8192}};
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (const Case& c : cases) {
    std::vector<float> a(static_cast<std::size_t>(c.m) * c.k), b(static_cast<std::size_t>(c.k) * c.n),
        out(static_cast<std::size_t>(c.m) * c.n);
    for (auto& x : a) x = u(rng);
    for (auto& x : b) x = u(rng);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::avx512}) {
      if (!isa_supported(isa)) continue;
      sgemm(isa, Trans::no, Trans::no, c.m, c.n, c.k, 1.0f, a.data(), c.k, b.data(), c.n, 0.0f, out.data(), c.n);
      const auto t0 = std::chrono::steady_clock::now();
      sgemm(isa, Trans::no, Trans::no, c.m, c.n, c.k, 1.0f, a.data(), c.k, b.data(), c.n, 0.0f,
            out.data(), c.n);
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::printf("%-7s m=%5d n=%5d k=%5d  %7.1f GFLOP/s\n", std::string(isa_name(isa)).c_str(),
                  c.m, c.n, c.k, 2.0 * c.m * c.n * c.k / s * 1e-9);
    }
  }
}
