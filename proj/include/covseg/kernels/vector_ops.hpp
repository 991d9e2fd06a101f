#pragma once

#include <cstddef>
#include <span>

#include "covseg/kernels/isa.hpp"

namespace covseg::kernels {

struct Moments {
  double sum = 0.0;
  double sum_sq = 0.0;
};

// Sum and sum of squares, accumulated in double.
Moments moments(std::span<const float> x);
Moments moments(Isa isa, std::span<const float> x);

// Sum of x[i] * y[i], accumulated in double.
double dot(std::span<const float> x, std::span<const float> y);
double dot(Isa isa, std::span<const float> x, std::span<const float> y);

struct AdamWStep {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.99f;
  float eps = 1e-5f;
  float weight_decay = 0.0f;
  // 1 - beta^t for the current step t.
  float bias_correction1 = 1.0f;
  float bias_correction2 = 1.0f;
};

// One decoupled-weight-decay Adam update over a parameter tensor:
//   p -= lr * wd * p
//   m = b1 m + (1 - b1) g ;  v = b2 v + (1 - b2) g^2
//   p -= lr * (m / bc1) / (sqrt(v / bc2) + eps)
void adamw_update(std::span<float> param, std::span<const float> grad,
                  std::span<float> m, std::span<float> v, const AdamWStep& s);
void adamw_update(Isa isa, std::span<float> param, std::span<const float> grad,
                  std::span<float> m, std::span<float> v, const AdamWStep& s);

}  // namespace covseg::kernels
