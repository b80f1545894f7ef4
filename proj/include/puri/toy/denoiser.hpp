#pragma once

#include <string>
#include <vector>

#include "puri/imaging/image.hpp"
#include "puri/nn/layers.hpp"
#include "puri/toy/bridge.hpp"

namespace puri::toy {

// Noise-prediction surrogate over a discrete diffusion schedule. Exposes the
// training-loss interface the denoising-ascent protection needs: alpha_bar
// plus a differentiable noise prediction.
class ToyDenoiser {
 public:
  struct Config {
    int image_size = 64;
    int patch = 8;
    int hidden = 64;
    int timesteps = 100;
    std::uint64_t seed = 11;
  };

  explicit ToyDenoiser(const Config& cfg);

  const Config& config() const { return cfg_; }
  int timesteps() const { return cfg_.timesteps; }
  float alpha_bar(int t) const;

  // (1, H*W*3) noisy input at step t -> predicted noise, same shape.
  nn::Tensor predict_noise(const nn::Tensor& x_t, int t) const;

  nn::ParameterList params();
  std::string weights_digest();

 private:
  Config cfg_;
  std::vector<int> patchify_;
  std::vector<int> unpatchify_;
  int patch_count_;
  int patch_dim_;
  std::vector<float> alpha_bar_;
  nn::Linear embed_;
  nn::Linear time_proj_;
  nn::Linear out_;
};

}  // namespace puri::toy
