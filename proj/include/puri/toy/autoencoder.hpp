#pragma once

#include <memory>
#include <string>
#include <vector>

#include "puri/imaging/image.hpp"
#include "puri/nn/layers.hpp"
#include "puri/nn/optim.hpp"
#include "puri/toy/bridge.hpp"

namespace puri::toy {

// Patch-based deterministic autoencoder. Stands in for the latent VAE of a
// diffusion editor at desk scale: the encoder is the PGD attack surface and
// the fine-tuning target, the decoder is the frozen reconstruction prior.
class ToyAutoencoder {
 public:
  struct Config {
    int image_size = 64;
    int patch = 8;
    int patch_hidden = 64;
    int latent_dim = 320;
    std::uint64_t seed = 1;
  };

  explicit ToyAutoencoder(const Config& cfg);

  const Config& config() const { return cfg_; }
  int latent_dim() const { return cfg_.latent_dim; }
  int image_size() const { return cfg_.image_size; }

  // (1, H*W*3) -> (1, d). Differentiable through both inputs and weights.
  nn::Tensor encode(const nn::Tensor& image_flat) const;
  // (1, d) -> (1, H*W*3), sigmoid output.
  nn::Tensor decode(const nn::Tensor& latent) const;

  std::vector<float> encode_image(const imaging::ImageTensor& img) const;
  imaging::ImageTensor decode_latent(const std::vector<float>& latent) const;
  imaging::ImageTensor reconstruct(const imaging::ImageTensor& img) const;

  nn::ParameterList encoder_params();
  nn::ParameterList decoder_params();
  nn::ParameterList all_params();

  void set_encoder_trainable(bool trainable);

  std::string encoder_digest();
  std::string decoder_digest();

  // Deep copy; the copy's encoder can be fine-tuned independently.
  std::unique_ptr<ToyAutoencoder> clone() const;

  void save(const std::string& path);
  void load(const std::string& path);

 private:
  Config cfg_;
  std::vector<int> patchify_;
  std::vector<int> unpatchify_;
  int patch_count_;
  int patch_dim_;
  nn::Linear patch_embed_;
  nn::Linear to_latent_;
  nn::Linear from_latent_;
  nn::Linear patch_decode_;
};

struct AutoencoderTrainConfig {
  int steps = 1500;
  int batch = 4;
  float lr = 2e-3f;
  float weight_decay = 0.0f;
  std::uint64_t seed = 7;
};

// Reconstruction pretraining on a corpus; returns the per-step loss trace.
std::vector<double> pretrain_autoencoder(ToyAutoencoder& ae,
                                         const std::vector<imaging::ImageTensor>& images,
                                         const AutoencoderTrainConfig& cfg);

}  // namespace puri::toy
