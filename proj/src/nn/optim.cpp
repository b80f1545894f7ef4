#include "puri/nn/optim.hpp"

#include <cmath>

namespace puri::nn {

AdamW::AdamW(ParameterList params, Options opts) : opts_(opts) {
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    Slot s;
    s.param = p;
    s.m = Array::Zero(p->tensor.size());
    s.v = Array::Zero(p->tensor.size());
    slots_.push_back(std::move(s));
  }
}

void AdamW::zero_grad() {
  for (auto& s : slots_) s.param->tensor.zero_grad();
}

void AdamW::step() {
  ++t_;
  const float bias1 = 1.0f - std::pow(opts_.beta1, static_cast<float>(t_));
  const float bias2 = 1.0f - std::pow(opts_.beta2, static_cast<float>(t_));
  for (auto& s : slots_) {
    const Array& g = s.param->tensor.grad();
    Array& w = s.param->tensor.value();
    s.m = opts_.beta1 * s.m + (1.0f - opts_.beta1) * g;
    s.v = opts_.beta2 * s.v + (1.0f - opts_.beta2) * g.square();
    const Array m_hat = s.m / bias1;
    const Array v_hat = s.v / bias2;
    w -= opts_.lr * (m_hat / (v_hat.sqrt() + opts_.eps) + opts_.weight_decay * w);
  }
}

}  // namespace puri::nn
