// Times model forward and training steps at a given input size.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <string>

#include "covseg/kernels/isa.hpp"
#include "covseg/unet3d/model.hpp"

using namespace covseg;
using Clock = std::chrono::steady_clock;

int main(int argc, char** argv) {
  const int batch = argc > 1 ? std::atoi(argv[1]) : 2;
  const int d = argc > 2 ? std::atoi(argv[2]) : 8;
  const int h = argc > 3 ? std::atoi(argv[3]) : 64;
  const int w = argc > 4 ? std::atoi(argv[4]) : 64;
  const int reps = argc > 5 ? std::atoi(argv[5]) : 3;
  std::printf("isa=%s input=(%d,3,%d,%d,%d)\n", std::string(kernels::isa_name(kernels::active_isa())).c_str(), batch,
              d, h, w);

  unet3d::UNet3d net(unet3d::UNet3dConfig{});
  nn::Tensor x({batch, 3, d, h, w});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : x.values()) v = u(rng);

  auto seconds = [](Clock::time_point a) {
    return std::chrono::duration<double>(Clock::now() - a).count();
  };
  for (bool frozen : {false, true}) {
    net.set_encoder_frozen(frozen);
    double fwd = 1e30, step = 1e30;
    for (int r = 0; r < reps; ++r) {
      auto t0 = Clock::now();
      nn::Tensor y = net.forward(x, false);
      fwd = std::min(fwd, seconds(t0));
      t0 = Clock::now();
      y = net.forward(x, true);
      net.zero_grad();
      net.backward(y);
      step = std::min(step, seconds(t0));
    }
    std::printf("frozen=%d best of %d: eval forward %.3fs  train step %.3fs\n", frozen ? 1 : 0,
                reps, fwd, step);
  }
  return 0;
}
