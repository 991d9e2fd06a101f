#include "covseg/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "covseg/core/error.hpp"

namespace covseg::losses {

namespace {

struct Layout {
  int batch = 0;
  int classes = 0;
  std::size_t voxels = 0;  // per sample
};

Layout check_inputs(const Tensor& scores, std::span<const std::uint8_t> labels) {
  if (scores.rank() != 5) {
    throw ShapeError("loss: scores must be (B, C, D, H, W), got " + nn::shape_string(scores.shape()));
  }
  Layout l{scores.dim(0), scores.dim(1),
           static_cast<std::size_t>(scores.dim(2)) * scores.dim(3) * scores.dim(4)};
  if (l.classes < 2) throw ShapeError("loss: need at least two classes");
  if (labels.size() != static_cast<std::size_t>(l.batch) * l.voxels) {
    throw ShapeError("loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(static_cast<std::size_t>(l.batch) * l.voxels) + " voxels");
  }
  for (float v : scores.values()) {
    if (!std::isfinite(v)) throw TrainingError("loss: non-finite value in scores");
  }
  for (std::uint8_t t : labels) {
    if (t >= l.classes) {
      throw ShapeError("loss: label " + std::to_string(t) + " outside [0, " +
                       std::to_string(l.classes) + ")");
    }
  }
  return l;
}

// Softmax probabilities in double, same layout as scores.
std::vector<double> softmax(const Tensor& scores, const Layout& l) {
  std::vector<double> p(scores.numel());
  const float* s = scores.data();
  for (int b = 0; b < l.batch; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * l.classes * l.voxels;
    for (std::size_t v = 0; v < l.voxels; ++v) {
      double m = -INFINITY;
      for (int c = 0; c < l.classes; ++c) m = std::max(m, double(s[base + c * l.voxels + v]));
      double z = 0.0;
      for (int c = 0; c < l.classes; ++c) {
        const std::size_t i = base + c * l.voxels + v;
        p[i] = std::exp(double(s[i]) - m);
        z += p[i];
      }
      for (int c = 0; c < l.classes; ++c) p[base + c * l.voxels + v] /= z;
    }
  }
  return p;
}

// grad_scores = J_softmax^T grad_p, voxel by voxel.
void softmax_backward(const std::vector<double>& p, const std::vector<double>& dp,
                      const Layout& l, double scale, Tensor& grad) {
  float* g = grad.data();
  for (int b = 0; b < l.batch; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * l.classes * l.voxels;
    for (std::size_t v = 0; v < l.voxels; ++v) {
      double dot = 0.0;
      for (int c = 0; c < l.classes; ++c) {
        const std::size_t i = base + c * l.voxels + v;
        dot += p[i] * dp[i];
      }
      for (int c = 0; c < l.classes; ++c) {
        const std::size_t i = base + c * l.voxels + v;
        g[i] += static_cast<float>(scale * p[i] * (dp[i] - dot));
      }
    }
  }
}

double dice_from_probs(const std::vector<double>& p, std::span<const std::uint8_t> labels,
                       const Layout& l, double eps, std::vector<double>* dp) {
  const int fg = l.classes - 1;
  double loss = 0.0;
  if (dp) dp->assign(p.size(), 0.0);
  for (int c = 1; c < l.classes; ++c) {
    double inter = 0.0, psq = 0.0, gsq = 0.0;
    for (int b = 0; b < l.batch; ++b) {
      const std::size_t base = (static_cast<std::size_t>(b) * l.classes + c) * l.voxels;
      const std::uint8_t* lab = labels.data() + static_cast<std::size_t>(b) * l.voxels;
      for (std::size_t v = 0; v < l.voxels; ++v) {
        const double pv = p[base + v];
        const double gv = lab[v] == c ? 1.0 : 0.0;
        inter += pv * gv;
        psq += pv * pv;
        gsq += gv;
      }
    }
    const double num = 2.0 * inter + eps;
    const double den = psq + gsq + eps;
    loss += 1.0 - num / den;
    if (dp) {
      for (int b = 0; b < l.batch; ++b) {
        const std::size_t base = (static_cast<std::size_t>(b) * l.classes + c) * l.voxels;
        const std::uint8_t* lab = labels.data() + static_cast<std::size_t>(b) * l.voxels;
        for (std::size_t v = 0; v < l.voxels; ++v) {
          const double gv = lab[v] == c ? 1.0 : 0.0;
          (*dp)[base + v] = -(2.0 * gv * den - num * 2.0 * p[base + v]) / (den * den) / fg;
        }
      }
    }
  }
  return loss / fg;
}

double ce_from_scores(const Tensor& scores, std::span<const std::uint8_t> labels, const Layout& l) {
  const float* s = scores.data();
  double total = 0.0;
  for (int b = 0; b < l.batch; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * l.classes * l.voxels;
    const std::uint8_t* lab = labels.data() + static_cast<std::size_t>(b) * l.voxels;
    for (std::size_t v = 0; v < l.voxels; ++v) {
      double m = -INFINITY;
      for (int c = 0; c < l.classes; ++c) m = std::max(m, double(s[base + c * l.voxels + v]));
      double z = 0.0;
      for (int c = 0; c < l.classes; ++c) z += std::exp(double(s[base + c * l.voxels + v]) - m);
      total += std::log(z) + m - double(s[base + lab[v] * l.voxels + v]);
    }
  }
  return total / (static_cast<double>(l.batch) * l.voxels);
}

void ce_grad(const std::vector<double>& p, std::span<const std::uint8_t> labels, const Layout& l,
             double scale, Tensor& grad) {
  const double inv = scale / (static_cast<double>(l.batch) * l.voxels);
  float* g = grad.data();
  for (int b = 0; b < l.batch; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * l.classes * l.voxels;
    const std::uint8_t* lab = labels.data() + static_cast<std::size_t>(b) * l.voxels;
    for (std::size_t v = 0; v < l.voxels; ++v) {
      for (int c = 0; c < l.classes; ++c) {
        const std::size_t i = base + c * l.voxels + v;
        g[i] += static_cast<float>(inv * (p[i] - (lab[v] == c ? 1.0 : 0.0)));
      }
    }
  }
}

void reset_grad(const Tensor& scores, Tensor* grad) {
  if (grad) *grad = Tensor(scores.shape(), 0.0f);
}

}  // namespace

double soft_dice_loss(const Tensor& scores, std::span<const std::uint8_t> labels, double eps,
                      Tensor* grad) {
  if (!(eps >= 0.0)) throw UsageError("soft Dice smoothing must be >= 0");
  const Layout l = check_inputs(scores, labels);
  const std::vector<double> p = softmax(scores, l);
  reset_grad(scores, grad);
  std::vector<double> dp;
  const double loss = dice_from_probs(p, labels, l, eps, grad ? &dp : nullptr);
  if (grad) softmax_backward(p, dp, l, 1.0, *grad);
  return loss;
}

double cross_entropy_loss(const Tensor& scores, std::span<const std::uint8_t> labels,
                          Tensor* grad) {
  const Layout l = check_inputs(scores, labels);
  const std::vector<double> p = softmax(scores, l);
  reset_grad(scores, grad);
  if (grad) ce_grad(p, labels, l, 1.0, *grad);
  return ce_from_scores(scores, labels, l);
}

LossBreakdown combined_loss(const Tensor& scores, std::span<const std::uint8_t> labels,
                            const LossWeights& w, Tensor* grad) {
  if (!(w.dice >= 0.0) || !(w.ce >= 0.0)) throw UsageError("loss weights must be non-negative");
  if (!(w.dice_eps >= 0.0)) throw UsageError("soft Dice smoothing must be >= 0");
  const Layout l = check_inputs(scores, labels);
  const std::vector<double> p = softmax(scores, l);
  reset_grad(scores, grad);
  LossBreakdown out;
  std::vector<double> dp;
  out.dice_component = dice_from_probs(p, labels, l, w.dice_eps, grad ? &dp : nullptr);
  out.ce_component = ce_from_scores(scores, labels, l);
  out.total = w.dice * out.dice_component + w.ce * out.ce_component;
  if (grad) {
    if (w.dice != 0.0) softmax_backward(p, dp, l, w.dice, *grad);
    if (w.ce != 0.0) ce_grad(p, labels, l, w.ce, *grad);
  }
  return out;
}

}  // namespace covseg::losses
