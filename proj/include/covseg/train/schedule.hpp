#pragma once

namespace covseg::train {

struct OneCycle {
  double warmup_fraction = 0.25;
  double start_div = 25.0;
  double final_div = 1e4;

  void validate() const;
};

// Warm-up length: floor(warmup_fraction * total + 0.5) steps.
long warmup_steps(long total_steps, double warmup_fraction = 0.25);

// Cosine ramp from base/start_div at step 0 to base at the warm-up boundary,
// then cosine annealing to base/final_div at the last step.
double one_cycle_lr(long step, long total_steps, double base_lr, const OneCycle& shape = {});

}  // namespace covseg::train
