#include "puri/toy/autoencoder.hpp"

#include <cmath>
#include "puri/nn/serialize.hpp"

namespace puri::toy {

ToyAutoencoder::ToyAutoencoder(const Config& cfg)
    : cfg_(cfg),
      patchify_(patchify_indices(cfg.image_size, cfg.image_size, cfg.patch)),
      unpatchify_(unpatchify_indices(cfg.image_size, cfg.image_size, cfg.patch)),
      patch_count_((cfg.image_size / cfg.patch) * (cfg.image_size / cfg.patch)),
      patch_dim_(cfg.patch * cfg.patch * 3) {
  Rng rng(cfg.seed);
  patch_embed_ = nn::Linear::make("enc.patch_embed", patch_dim_, cfg.patch_hidden, rng);
  to_latent_ = nn::Linear::make("enc.to_latent", patch_count_ * cfg.patch_hidden,
                                cfg.latent_dim, rng);
  from_latent_ = nn::Linear::make("dec.from_latent", cfg.latent_dim,
                                  patch_count_ * cfg.patch_hidden, rng);
  patch_decode_ = nn::Linear::make("dec.patch_decode", cfg.patch_hidden, patch_dim_, rng);
  set_encoder_trainable(false);
  for (nn::Parameter* p : decoder_params()) {
    p->trainable = false;
    p->tensor.node()->requires_grad = false;
  }
}

nn::Tensor ToyAutoencoder::encode(const nn::Tensor& image_flat) const {
  PURI_CHECK(image_flat.size() ==
                 static_cast<Eigen::Index>(cfg_.image_size) * cfg_.image_size * 3,
             "ToyAutoencoder::encode: input size mismatch");
  nn::Tensor patches = nn::gather_flat(image_flat, patchify_, patch_count_, patch_dim_);
  nn::Tensor h = nn::tanh(patch_embed_(patches));
  nn::Tensor flat = nn::reshape(h, 1, patch_count_ * cfg_.patch_hidden);
  return to_latent_(flat);
}

nn::Tensor ToyAutoencoder::decode(const nn::Tensor& latent) const {
  PURI_CHECK(latent.size() == cfg_.latent_dim,
             "ToyAutoencoder::decode: latent size mismatch");
  nn::Tensor h = nn::tanh(from_latent_(latent));
  nn::Tensor patches = nn::reshape(h, patch_count_, cfg_.patch_hidden);
  nn::Tensor out_patches = patch_decode_(patches);
  nn::Tensor flat = nn::reshape(out_patches, 1, patch_count_ * patch_dim_);
  nn::Tensor img = nn::gather_flat(flat, unpatchify_, 1,
                                   cfg_.image_size * cfg_.image_size * 3);
  return nn::sigmoid(img);
}

std::vector<float> ToyAutoencoder::encode_image(const imaging::ImageTensor& img) const {
  nn::Tensor z = encode(image_to_tensor(img));
  return {z.value().data(), z.value().data() + z.size()};
}

imaging::ImageTensor ToyAutoencoder::decode_latent(const std::vector<float>& latent) const {
  nn::Tensor z = nn::Tensor::from_vector(latent, 1, static_cast<int>(latent.size()));
  nn::Tensor img = decode(z);
  return tensor_to_image(img, cfg_.image_size, cfg_.image_size);
}

imaging::ImageTensor ToyAutoencoder::reconstruct(const imaging::ImageTensor& img) const {
  return decode_latent(encode_image(img));
}

nn::ParameterList ToyAutoencoder::encoder_params() {
  nn::ParameterList out;
  patch_embed_.collect(out);
  to_latent_.collect(out);
  return out;
}

nn::ParameterList ToyAutoencoder::decoder_params() {
  nn::ParameterList out;
  from_latent_.collect(out);
  patch_decode_.collect(out);
  return out;
}

nn::ParameterList ToyAutoencoder::all_params() {
  nn::ParameterList out = encoder_params();
  for (auto* p : decoder_params()) out.push_back(p);
  return out;
}

void ToyAutoencoder::set_encoder_trainable(bool trainable) {
  for (nn::Parameter* p : encoder_params()) {
    p->trainable = trainable;
    p->tensor.node()->requires_grad = trainable;
  }
}

std::string ToyAutoencoder::encoder_digest() {
  auto params = encoder_params();
  return nn::parameter_digest(params);
}

std::string ToyAutoencoder::decoder_digest() {
  auto params = decoder_params();
  return nn::parameter_digest(params);
}

std::unique_ptr<ToyAutoencoder> ToyAutoencoder::clone() const {
  auto copy = std::make_unique<ToyAutoencoder>(cfg_);
  auto* self = const_cast<ToyAutoencoder*>(this);
  auto src = self->all_params();
  auto dst = copy->all_params();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i]->tensor.value() = src[i]->tensor.value();
  }
  return copy;
}

void ToyAutoencoder::save(const std::string& path) {
  auto params = all_params();
  nn::save_parameters(params, path);
}

void ToyAutoencoder::load(const std::string& path) {
  auto params = all_params();
  nn::load_parameters(params, path);
}

std::vector<double> pretrain_autoencoder(ToyAutoencoder& ae,
                                         const std::vector<imaging::ImageTensor>& images,
                                         const AutoencoderTrainConfig& cfg) {
  PURI_CHECK(!images.empty(), "pretrain_autoencoder: empty corpus");
  ae.set_encoder_trainable(true);
  for (nn::Parameter* p : ae.decoder_params()) {
    p->trainable = true;
    p->tensor.node()->requires_grad = true;
  }
  nn::AdamW::Options opts;
  opts.lr = cfg.lr;
  opts.weight_decay = cfg.weight_decay;
  nn::AdamW optim(ae.all_params(), opts);

  Rng rng(cfg.seed);
  std::vector<double> trace;
  trace.reserve(cfg.steps);
  for (int step = 0; step < cfg.steps; ++step) {
    // Cosine decay to 5% of the base rate; the fixed-rate noise floor
    // otherwise dominates the reconstruction quality.
    const float progress = static_cast<float>(step) / std::max(1, cfg.steps);
    optim.set_lr(cfg.lr * (0.05f + 0.95f * 0.5f *
                           (1.0f + std::cos(3.14159265f * progress))));
    optim.zero_grad();
    double loss_sum = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      const auto& img = images[rng.uniform_int(0, static_cast<int>(images.size()) - 1)];
      nn::Tensor x = image_to_tensor(img);
      nn::Tensor recon = ae.decode(ae.encode(x));
      nn::Tensor loss = nn::scale(nn::mse(recon, x), 1.0f / cfg.batch);
      loss.backward();
      loss_sum += loss.item();
    }
    optim.step();
    trace.push_back(loss_sum);
  }

  ae.set_encoder_trainable(false);
  for (nn::Parameter* p : ae.decoder_params()) {
    p->trainable = false;
    p->tensor.node()->requires_grad = false;
  }
  return trace;
}

}  // namespace puri::toy
