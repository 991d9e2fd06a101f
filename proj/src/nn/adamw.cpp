#include "covseg/nn/adamw.hpp"

#include <cmath>

#include "covseg/kernels/vector_ops.hpp"

namespace covseg::nn {

AdamW::AdamW(std::vector<Parameter*> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  for (Parameter* p : params_) {
    state_[p->name] = State{Tensor(p->value.shape(), 0.0f), Tensor(p->value.shape(), 0.0f), 0};
  }
}

void AdamW::step(float lr, float weight_decay) {
  for (Parameter* p : params_) {
    if (!p->trainable) continue;
    State& s = state_.at(p->name);
    ++s.step;
    kernels::AdamWStep k;
    k.lr = lr;
    k.beta1 = config_.beta1;
    k.beta2 = config_.beta2;
    k.eps = config_.eps;
    k.weight_decay = weight_decay;
    k.bias_correction1 = static_cast<float>(1.0 - std::pow(config_.beta1, s.step));
    k.bias_correction2 = static_cast<float>(1.0 - std::pow(config_.beta2, s.step));
    kernels::adamw_update(p->value.span(), p->grad.span(), s.m.span(), s.v.span(), k);
  }
}

void AdamW::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace covseg::nn
