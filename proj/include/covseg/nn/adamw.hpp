#pragma once

#include <map>
#include <string>
#include <vector>

#include "covseg/nn/parameter.hpp"

namespace covseg::nn {

struct AdamWConfig {
  float beta1 = 0.9f;
  float beta2 = 0.99f;
  float eps = 1e-5f;
};

// Adam with decoupled weight decay. Parameters flagged non-trainable are
// skipped entirely: no decay, no moment update, no step count.
class AdamW {
 public:
  struct State {
    Tensor m;
    Tensor v;
    long step = 0;
  };

  AdamW(std::vector<Parameter*> params, AdamWConfig config = {});

  void step(float lr, float weight_decay);
  void zero_grad();

  const std::vector<Parameter*>& params() const noexcept { return params_; }
  // Keyed by parameter name.
  std::map<std::string, State>& state() noexcept { return state_; }
  const std::map<std::string, State>& state() const noexcept { return state_; }

 private:
  std::vector<Parameter*> params_;
  AdamWConfig config_;
  std::map<std::string, State> state_;
};

}  // namespace covseg::nn
