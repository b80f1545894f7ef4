#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "puri/imaging/image.hpp"
#include "puri/nn/layers.hpp"
#include "puri/purify/purifier.hpp"
#include "puri/toy/autoencoder.hpp"

namespace puri::vaetrans {

// Opaque encoder/decoder pair. Real diffusion VAEs attach by implementing
// this; the desk-scale backbone is ToyVaeBackbone below.
class VaeBackbone {
 public:
  virtual ~VaeBackbone() = default;
  virtual const std::string& id() const = 0;
  virtual int latent_dim() const = 0;
  virtual nn::Tensor encode(const nn::Tensor& image_flat) const = 0;
  virtual nn::Tensor decode(const nn::Tensor& latent) const = 0;
  virtual nn::ParameterList encoder_params() = 0;
  virtual std::string decoder_digest() = 0;
  virtual std::string encoder_digest() = 0;
  virtual void set_encoder_trainable(bool trainable) = 0;
  virtual std::unique_ptr<VaeBackbone> clone() const = 0;
};

class ToyVaeBackbone : public VaeBackbone {
 public:
  ToyVaeBackbone(std::string id, std::shared_ptr<toy::ToyAutoencoder> ae)
      : id_(std::move(id)), ae_(std::move(ae)) {}

  const std::string& id() const override { return id_; }
  int latent_dim() const override { return ae_->latent_dim(); }
  nn::Tensor encode(const nn::Tensor& x) const override { return ae_->encode(x); }
  nn::Tensor decode(const nn::Tensor& z) const override { return ae_->decode(z); }
  nn::ParameterList encoder_params() override { return ae_->encoder_params(); }
  std::string decoder_digest() override { return ae_->decoder_digest(); }
  std::string encoder_digest() override { return ae_->encoder_digest(); }
  void set_encoder_trainable(bool t) override { ae_->set_encoder_trainable(t); }
  std::unique_ptr<VaeBackbone> clone() const override {
    return std::make_unique<ToyVaeBackbone>(id_, ae_->clone());
  }
  toy::ToyAutoencoder& autoencoder() { return *ae_; }

 private:
  std::string id_;
  std::shared_ptr<toy::ToyAutoencoder> ae_;
};

// Encoder E + frozen decoder D for one editor family. The decoder digest is
// recorded at construction; training asserts it never drifts.
struct VaePair {
  std::shared_ptr<VaeBackbone> vae;
  std::string base_vae_id;
  std::string decoder_digest;

  static VaePair wrap(std::shared_ptr<VaeBackbone> backbone);
};

struct VaeTransConfig {
  float sigma_train = 0.1f;
  float learning_rate = 1e-4f;
  int epochs = 6;
  int batch_size = 8;
  std::uint64_t seed = 5;

  void validate() const {
    PURI_CHECK(sigma_train > 0.0f, "VaeTransConfig: sigma_train must be > 0");
    PURI_CHECK(epochs >= 1 && batch_size >= 1,
               "VaeTransConfig: epochs and batch_size must be >= 1");
  }
};

struct NoisyPair {
  imaging::ImageTensor noisy;
  imaging::ImageTensor clean;
};

// One synthetic pair per image: x_i stays untouched, the noisy twin gets
// i.i.d. Gaussian noise at the given sigma.
std::vector<NoisyPair> make_noisy_pairs(const std::vector<imaging::ImageTensor>& images,
                                        float sigma, std::uint64_t seed);

using EncodeFn = std::function<nn::Tensor(const nn::Tensor&)>;

// (1/d) |E~(noisy) - E(clean)|^2 with E treated as a frozen reference.
double latent_mse_loss(const EncodeFn& e_tilde, const EncodeFn& e_ref,
                       const imaging::ImageTensor& noisy,
                       const imaging::ImageTensor& clean, int latent_dim);

struct TrainedEncoder {
  std::shared_ptr<VaeBackbone> model;  // fine-tuned encoder, untouched decoder
  std::string base_vae_id;
  std::vector<double> trajectory;  // per-epoch mean loss
  std::string encoder_digest;
  VaeTransConfig config;
};

// Warm-started fine-tuning of the encoder on noisy/clean latent pairs with a
// decoupled-weight-decay adaptive optimizer; the decoder digest is asserted
// unchanged before/after.
TrainedEncoder train_encoder(const VaePair& vae, const std::vector<NoisyPair>& data,
                             const VaeTransConfig& cfg);

// x_pur = D(E~(x_adv)), clamped to [0,1]. Refuses encoders trained for a
// different base VAE.
imaging::ImageTensor vae_trans_purify(const imaging::ImageTensor& x_adv,
                                      const TrainedEncoder& e_tilde,
                                      const VaePair& vae);

purify::PurifierOp make_vaetrans_purifier(std::shared_ptr<TrainedEncoder> trained,
                                          const VaePair& vae);

// Sidecar manifest + parameter blob.
void save_trained_encoder(TrainedEncoder& trained, const std::string& params_path,
                          const std::string& manifest_path);

}  // namespace puri::vaetrans
