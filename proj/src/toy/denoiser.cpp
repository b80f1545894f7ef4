#include "puri/toy/denoiser.hpp"

#include <cmath>

namespace puri::toy {

ToyDenoiser::ToyDenoiser(const Config& cfg)
    : cfg_(cfg),
      patchify_(patchify_indices(cfg.image_size, cfg.image_size, cfg.patch)),
      unpatchify_(unpatchify_indices(cfg.image_size, cfg.image_size, cfg.patch)),
      patch_count_((cfg.image_size / cfg.patch) * (cfg.image_size / cfg.patch)),
      patch_dim_(cfg.patch * cfg.patch * 3) {
  PURI_CHECK(cfg.timesteps >= 1, "ToyDenoiser: timesteps must be >= 1");
  // Linear beta schedule; alpha_bar is the cumulative product of (1 - beta).
  alpha_bar_.resize(cfg.timesteps);
  double acc = 1.0;
  for (int t = 0; t < cfg.timesteps; ++t) {
    const double beta =
        1e-4 + (0.02 - 1e-4) * static_cast<double>(t) /
                   std::max(1, cfg.timesteps - 1);
    acc *= (1.0 - beta);
    alpha_bar_[t] = static_cast<float>(acc);
  }
  Rng rng(cfg.seed);
  embed_ = nn::Linear::make("den.embed", patch_dim_, cfg.hidden, rng);
  time_proj_ = nn::Linear::make("den.time_proj", 4, cfg.hidden, rng);
  out_ = nn::Linear::make("den.out", cfg.hidden, patch_dim_, rng);
  for (nn::Parameter* p : params()) {
    p->trainable = false;
    p->tensor.node()->requires_grad = false;
  }
}

float ToyDenoiser::alpha_bar(int t) const {
  PURI_CHECK(t >= 0 && t < cfg_.timesteps, "ToyDenoiser: timestep out of range");
  return alpha_bar_[t];
}

nn::Tensor ToyDenoiser::predict_noise(const nn::Tensor& x_t, int t) const {
  PURI_CHECK(t >= 0 && t < cfg_.timesteps, "ToyDenoiser: timestep out of range");
  const float tf = static_cast<float>(t) / static_cast<float>(cfg_.timesteps);
  nn::Tensor tfeat = nn::Tensor::from_vector(
      {1.0f, tf, tf * tf, std::sin(3.14159265f * tf)}, 1, 4);
  nn::Tensor patches = nn::gather_flat(x_t, patchify_, patch_count_, patch_dim_);
  nn::Tensor h = nn::tanh(embed_(patches));
  nn::Tensor temb = time_proj_(tfeat);  // (1, hidden) broadcast over patches
  h = nn::add_rowvec(h, temb);
  nn::Tensor eps_patches = out_(h);
  nn::Tensor flat = nn::reshape(eps_patches, 1, patch_count_ * patch_dim_);
  return nn::gather_flat(flat, unpatchify_, 1,
                         cfg_.image_size * cfg_.image_size * 3);
}

nn::ParameterList ToyDenoiser::params() {
  nn::ParameterList out;
  embed_.collect(out);
  time_proj_.collect(out);
  out_.collect(out);
  return out;
}

std::string ToyDenoiser::weights_digest() {
  auto p = params();
  return nn::parameter_digest(p);
}

}  // namespace puri::toy
