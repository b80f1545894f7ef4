#include "puri/nn/layers.hpp"

#include <cmath>

#include "puri/common/digest.hpp"

namespace puri::nn {

Tensor make_param(int rows, int cols, Rng& rng, float stddev, bool trainable) {
  Array a(static_cast<Eigen::Index>(rows) * cols);
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = stddev * rng.normalf();
  return Tensor::from_array(std::move(a), rows, cols, trainable);
}

Linear Linear::make(const std::string& name, int in, int out, Rng& rng,
                    bool trainable) {
  Linear l;
  const float stddev = 1.0f / std::sqrt(static_cast<float>(in));
  l.weight = Parameter{name + ".weight", make_param(in, out, rng, stddev, trainable),
                       trainable};
  l.bias = Parameter{name + ".bias", Tensor::zeros(1, out, trainable), trainable};
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  return add_rowvec(matmul(x, weight.tensor), bias.tensor);
}

void Linear::collect(ParameterList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

LoraLinear LoraLinear::adapt(Linear frozen_base, int rank, float alpha, Rng& rng) {
  PURI_CHECK(rank >= 1, "LoraLinear: rank must be >= 1");
  LoraLinear l;
  l.base = std::move(frozen_base);
  l.base.weight.trainable = false;
  l.base.bias.trainable = false;
  l.base.weight.tensor.node()->requires_grad = false;
  l.base.bias.tensor.node()->requires_grad = false;
  const int in = l.base.in_features();
  const int out = l.base.out_features();
  const float stddev = 1.0f / std::sqrt(static_cast<float>(in));
  l.lora_a = Parameter{l.base.weight.name + ".lora_a",
                       make_param(in, rank, rng, stddev, true), true};
  l.lora_b = Parameter{l.base.weight.name + ".lora_b",
                       Tensor::zeros(rank, out, true), true};
  l.scaling = alpha / static_cast<float>(rank);
  return l;
}

Tensor LoraLinear::operator()(const Tensor& x) const {
  Tensor base_out = base(x);
  Tensor delta = matmul(matmul(x, lora_a.tensor), lora_b.tensor);
  return add(base_out, scale(delta, scaling));
}

void LoraLinear::collect(ParameterList& out) {
  base.collect(out);
  out.push_back(&lora_a);
  out.push_back(&lora_b);
}

long total_param_count(const ParameterList& params) {
  long n = 0;
  for (const auto* p : params) n += static_cast<long>(p->tensor.size());
  return n;
}

long trainable_param_count(const ParameterList& params) {
  long n = 0;
  for (const auto* p : params) {
    if (p->trainable) n += static_cast<long>(p->tensor.size());
  }
  return n;
}

std::string parameter_digest(const ParameterList& params) {
  std::string acc;
  for (const auto* p : params) {
    acc += p->name;
    acc += ':';
    acc += sha256_hex(std::span<const float>(p->tensor.value().data(),
                                             p->tensor.value().size()));
    acc += '\n';
  }
  return sha256_hex(acc);
}

}  // namespace puri::nn
