#pragma once

#include <cstdint>
#include <span>

#include "covseg/nn/tensor.hpp"

namespace covseg::losses {

using nn::Tensor;

struct LossWeights {
  double dice = 1.0;
  double ce = 1.0;
  double dice_eps = 1e-5;
};

struct LossBreakdown {
  double dice_component = 0.0;
  double ce_component = 0.0;
  double total = 0.0;
};

// scores: (B, C, D, H, W) raw class scores. labels: B*D*H*W class indices in
// [0, C), same voxel order. When `grad` is given it receives dLoss/dscores
// (overwritten, shaped like scores).

// Soft Dice over softmax probabilities, numerator and denominator summed over
// the whole batch, averaged over the foreground channels 1..C-1:
//   1 - (2 sum(p g) + eps) / (sum(p^2) + sum(g^2) + eps)
double soft_dice_loss(const Tensor& scores, std::span<const std::uint8_t> labels,
                      double eps = 1e-5, Tensor* grad = nullptr);

// Mean over voxels of -log softmax(scores)[label].
double cross_entropy_loss(const Tensor& scores, std::span<const std::uint8_t> labels,
                          Tensor* grad = nullptr);

LossBreakdown combined_loss(const Tensor& scores, std::span<const std::uint8_t> labels,
                            const LossWeights& weights = {}, Tensor* grad = nullptr);

}  // namespace covseg::losses
