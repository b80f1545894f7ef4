#pragma once

#include <string>
#include <vector>

#include "puri/common/rng.hpp"
#include "puri/nn/tensor.hpp"

namespace puri::nn {

// Named parameter leaf. `trainable` drives optimizer registration and the
// frozen-weight hash checks.
struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

using ParameterList = std::vector<Parameter*>;

Tensor make_param(int rows, int cols, Rng& rng, float stddev, bool trainable);

// y = x * W + b with x (n, in), W (in, out), b (1, out).
struct Linear {
  Parameter weight;
  Parameter bias;

  static Linear make(const std::string& name, int in, int out, Rng& rng,
                     bool trainable = true);
  Tensor operator()(const Tensor& x) const;
  void collect(ParameterList& out);
  int in_features() const { return weight.tensor.rows(); }
  int out_features() const { return weight.tensor.cols(); }
};

// Linear with a frozen base and a trainable rank-r update:
//   y = x * (W + (alpha/r) * A * B) + b
// A (in, r) gets a Gaussian init, B (r, out) starts at zero so the adapter
// initially contributes nothing.
struct LoraLinear {
  Linear base;  // frozen
  Parameter lora_a;
  Parameter lora_b;
  float scaling = 1.0f;

  static LoraLinear adapt(Linear frozen_base, int rank, float alpha, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(ParameterList& out);
  long lora_param_count() const {
    return static_cast<long>(lora_a.tensor.size() + lora_b.tensor.size());
  }
};

long total_param_count(const ParameterList& params);
long trainable_param_count(const ParameterList& params);

// Hex digest over the raw float bytes of every parameter, in list order.
// This is the frozen-weight witness used by the training contracts.
std::string parameter_digest(const ParameterList& params);

}  // namespace puri::nn
