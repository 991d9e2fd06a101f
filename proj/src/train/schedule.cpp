#include "covseg/train/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "covseg/core/error.hpp"

namespace covseg::train {

void OneCycle::validate() const {
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw UsageError("one-cycle warmup_fraction must lie in [0, 1]");
  }
  if (!(start_div >= 1.0) || !std::isfinite(start_div)) throw UsageError("one-cycle start_div must be >= 1");
  if (!(final_div >= 1.0) || !std::isfinite(final_div)) throw UsageError("one-cycle final_div must be >= 1");
}

long warmup_steps(long total_steps, double warmup_fraction) {
  return static_cast<long>(std::floor(warmup_fraction * static_cast<double>(total_steps) + 0.5));
}

double one_cycle_lr(long step, long total_steps, double base_lr, const OneCycle& shape) {
  shape.validate();
  if (total_steps <= 0) throw UsageError("one-cycle schedule needs at least one step");
  if (step < 0 || step >= total_steps) {
    throw UsageError("step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + ")");
  }
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw UsageError("base learning rate must be positive");
  auto cosine = [](double from, double to, double t) { return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * t)); };
  const long w = warmup_steps(total_steps, shape.warmup_fraction);
  if (step < w) return cosine(base_lr / shape.start_div, base_lr, static_cast<double>(step) / w);
  const long rest = total_steps - 1 - w;
  if (rest <= 0) return base_lr;
  return cosine(base_lr, base_lr / shape.final_div, static_cast<double>(step - w) / rest);
}

}  // namespace covseg::train
