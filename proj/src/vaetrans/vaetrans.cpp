#include "puri/vaetrans/vaetrans.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "nlohmann/json.hpp"
#include "puri/common/digest.hpp"
#include "puri/common/rng.hpp"
#include "puri/nn/optim.hpp"
#include "puri/nn/serialize.hpp"
#include "puri/toy/bridge.hpp"

namespace puri::vaetrans {

using json = nlohmann::json;

VaePair VaePair::wrap(std::shared_ptr<VaeBackbone> backbone) {
  VaePair pair;
  pair.base_vae_id = backbone->id();
  pair.decoder_digest = backbone->decoder_digest();
  pair.vae = std::move(backbone);
  return pair;
}

std::vector<NoisyPair> make_noisy_pairs(const std::vector<imaging::ImageTensor>& images,
                                        float sigma, std::uint64_t seed) {
  PURI_CHECK(!images.empty(), "make_noisy_pairs: image list must be non-empty");
  PURI_CHECK(sigma > 0.0f, "make_noisy_pairs: sigma must be > 0");
  std::vector<NoisyPair> pairs;
  pairs.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::uint64_t s = derive_seed(seed, "pair-" + std::to_string(i));
    pairs.push_back(NoisyPair{imaging::add_gaussian_noise(images[i], sigma, s),
                              images[i]});
  }
  return pairs;
}

double latent_mse_loss(const EncodeFn& e_tilde, const EncodeFn& e_ref,
                       const imaging::ImageTensor& noisy,
                       const imaging::ImageTensor& clean, int latent_dim) {
  nn::Tensor z_noisy = e_tilde(toy::image_to_tensor(noisy));
  nn::Tensor z_clean = e_ref(toy::image_to_tensor(clean));
  PURI_CHECK(z_noisy.size() == latent_dim && z_clean.size() == latent_dim,
             "latent_mse_loss: latent shape mismatch");
  return nn::mse(z_noisy, z_clean).item();
}

TrainedEncoder train_encoder(const VaePair& vae, const std::vector<NoisyPair>& data,
                             const VaeTransConfig& cfg) {
  cfg.validate();
  PURI_CHECK(!data.empty(), "train_encoder: training data must be non-empty");

  const std::string decoder_before = vae.vae->decoder_digest();
  PURI_CHECK(decoder_before == vae.decoder_digest,
             "train_encoder: decoder drifted before training started");

  // Warm start: the trainee is a deep copy of the base VAE.
  std::shared_ptr<VaeBackbone> trainee = vae.vae->clone();
  trainee->set_encoder_trainable(true);

  nn::AdamW::Options opts;
  opts.lr = cfg.learning_rate;
  // No decay: a warm-started encoder on zero-noise data must stay at the
  // optimum instead of being pulled toward zero weights.
  opts.weight_decay = 0.0f;
  nn::AdamW optim(trainee->encoder_params(), opts);

  Rng rng(cfg.seed);
  const int d = trainee->latent_dim();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<double> trajectory;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Seeded Fisher-Yates shuffle.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<int>(i) - 1)]);
    }
    double epoch_loss = 0.0;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end =
          std::min(order.size(), cursor + static_cast<std::size_t>(cfg.batch_size));
      const float inv_batch = 1.0f / static_cast<float>(batch_end - cursor);
      optim.zero_grad();
      for (; cursor < batch_end; ++cursor) {
        const NoisyPair& pair = data[order[cursor]];
        nn::Tensor z_noisy = trainee->encode(toy::image_to_tensor(pair.noisy));
        // Frozen reference encoder; no gradient flows through it.
        nn::Tensor z_clean = vae.vae->encode(toy::image_to_tensor(pair.clean));
        PURI_CHECK(z_noisy.size() == d && z_clean.size() == d,
                   "train_encoder: latent shape mismatch");
        nn::Tensor loss = nn::scale(nn::mse(z_noisy, z_clean), inv_batch);
        loss.backward();
        epoch_loss += loss.item();
      }
      optim.step();
    }
    trajectory.push_back(epoch_loss * cfg.batch_size / data.size());
  }

  trainee->set_encoder_trainable(false);
  const std::string decoder_after = trainee->decoder_digest();
  if (decoder_after != decoder_before) {
    throw ContractError("train_encoder: decoder hash drifted during training");
  }

  TrainedEncoder trained;
  trained.model = std::move(trainee);
  trained.base_vae_id = vae.base_vae_id;
  trained.trajectory = std::move(trajectory);
  trained.encoder_digest = trained.model->encoder_digest();
  trained.config = cfg;
  return trained;
}

imaging::ImageTensor vae_trans_purify(const imaging::ImageTensor& x_adv,
                                      const TrainedEncoder& e_tilde,
                                      const VaePair& vae) {
  PURI_CHECK(e_tilde.base_vae_id == vae.base_vae_id,
             "vae_trans_purify: encoder was trained for base VAE '" +
                 e_tilde.base_vae_id + "', refusing to pair with '" +
                 vae.base_vae_id + "'");
  PURI_CHECK(e_tilde.model->latent_dim() == vae.vae->latent_dim(),
             "vae_trans_purify: latent dimensions differ");
  nn::Tensor z = e_tilde.model->encode(toy::image_to_tensor(x_adv));
  nn::Tensor decoded = vae.vae->decode(z);
  return toy::tensor_to_image(decoded, x_adv.height(), x_adv.width());
}

purify::PurifierOp make_vaetrans_purifier(std::shared_ptr<TrainedEncoder> trained,
                                          const VaePair& vae) {
  json config;
  config["op"] = "vaetrans";
  config["base_vae_id"] = vae.base_vae_id;
  config["decoder_digest"] = vae.decoder_digest;
  config["encoder_digest"] = trained->encoder_digest;
  config["sigma_train"] = trained->config.sigma_train;
  config["epochs"] = trained->config.epochs;
  VaePair pair = vae;
  return purify::PurifierOp(
      "vaetrans", sha256_hex(config.dump()),
      [trained = std::move(trained), pair](const imaging::ImageTensor& img,
                                           std::uint64_t) {
        return vae_trans_purify(img, *trained, pair);
      });
}

void save_trained_encoder(TrainedEncoder& trained, const std::string& params_path,
                          const std::string& manifest_path) {
  auto params = trained.model->encoder_params();
  nn::save_parameters(params, params_path);
  json manifest;
  manifest["base_vae_id"] = trained.base_vae_id;
  manifest["decoder_digest"] = trained.model->decoder_digest();
  manifest["encoder_digest"] = trained.encoder_digest;
  manifest["trajectory"] = trained.trajectory;
  manifest["config"] = {{"sigma_train", trained.config.sigma_train},
                        {"learning_rate", trained.config.learning_rate},
                        {"epochs", trained.config.epochs},
                        {"batch_size", trained.config.batch_size},
                        {"seed", trained.config.seed},
                        {"optimizer", "adamw"}};
  std::ofstream os(manifest_path);
  PURI_CHECK(os.good(), "save_trained_encoder: cannot write " + manifest_path);
  os << manifest.dump(2) << '\n';
}

}  // namespace puri::vaetrans
