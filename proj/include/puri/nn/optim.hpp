#pragma once

#include <vector>

#include "puri/nn/layers.hpp"

namespace puri::nn {

// Decoupled-weight-decay adaptive gradient optimizer (AdamW).
class AdamW {
 public:
  struct Options {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.01f;
  };

  AdamW(ParameterList params, Options opts);

  void zero_grad();
  void step();
  void set_lr(float lr) { opts_.lr = lr; }

  const Options& options() const { return opts_; }

 private:
  struct Slot {
    Parameter* param;
    Array m;
    Array v;
  };
  std::vector<Slot> slots_;
  Options opts_;
  long t_ = 0;
};

}  // namespace puri::nn
