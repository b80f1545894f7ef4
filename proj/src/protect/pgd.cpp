#include "puri/protect/pgd.hpp"

#include <cmath>
#include <fstream>

#include "nlohmann/json.hpp"
#include "puri/common/rng.hpp"
#include "puri/toy/bridge.hpp"

namespace puri::protect {

using json = nlohmann::json;

const char* loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kEncoderTarget: return "encoder-target";
    case LossKind::kDenoisingAscent: return "denoising-ascent";
    case LossKind::kExternal: return "external";
  }
  return "unknown";
}

imaging::ImageTensor ProtectionRecord::adversarial() const {
  imaging::ImageTensor out(clean.height(), clean.width());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    out.data()[i] = std::clamp(clean.data()[i] + delta[i], 0.0f, 1.0f);
  }
  return out;
}

float ProtectionRecord::delta_linf() const {
  float m = 0.0f;
  for (float d : delta) m = std::max(m, std::abs(d));
  return m;
}

namespace {

constexpr float kBudgetSlack = 1.1920929e-7f;  // 2^-23

void assert_iterate_valid(const imaging::ImageTensor& x,
                          const imaging::ImageTensor& adv, float eps) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float d = std::abs(adv.data()[i] - x.data()[i]);
    PURI_CHECK(d <= eps + kBudgetSlack,
               "pgd_optimize: budget violated inside the loop");
    PURI_CHECK(adv.data()[i] >= 0.0f && adv.data()[i] <= 1.0f,
               "pgd_optimize: iterate escaped [0,1]");
  }
}

}  // namespace

ProtectionRecord pgd_optimize(const imaging::ImageTensor& x,
                              const SurrogateLoss& loss, const PgdConfig& cfg) {
  cfg.validate();
  const float eps = cfg.budget.epsilon();
  const float alpha = cfg.alpha();
  const float dir = loss.direction() == Direction::kMinimize ? -1.0f : 1.0f;

  ProtectionRecord record;
  record.clean = x;
  record.budget = cfg.budget;
  record.surrogate_id = loss.surrogate_id();
  record.loss_kind = loss.kind();
  record.config = cfg;
  record.delta.assign(x.size(), 0.0f);

  imaging::ImageTensor adv = x;  // delta initialized to zero
  std::vector<float> grad(x.size(), 0.0f);

  for (int it = 0; it < cfg.iterations; ++it) {
    const double value = loss.eval(adv, &grad, it);
    bool finite = std::isfinite(value);
    for (std::size_t i = 0; finite && i < grad.size(); ++i) {
      finite = std::isfinite(grad[i]);
    }
    if (!finite) {
      record.aborted = true;
      record.abort_iteration = it;
      record.abort_reason = "non-finite loss or gradient";
      break;
    }
    record.loss_trajectory.push_back(value);

    imaging::ImageTensor candidate(adv.height(), adv.width());
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const float s = grad[i] > 0.0f ? 1.0f : (grad[i] < 0.0f ? -1.0f : 0.0f);
      candidate.data()[i] = adv.data()[i] + dir * alpha * s;
    }
    adv = imaging::project_linf(x, candidate, cfg.budget);
    assert_iterate_valid(x, adv, eps);
  }

  if (!record.aborted && imaging::is_grid_aligned(x)) {
    adv = imaging::snap_to_grid(adv);
    assert_iterate_valid(x, adv, eps);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    record.delta[i] = adv.data()[i] - x.data()[i];
  }
  record.final_loss = record.aborted
                          ? (record.loss_trajectory.empty()
                                 ? 0.0
                                 : record.loss_trajectory.back())
                          : loss.eval(adv, nullptr, cfg.iterations);
  return record;
}

// --- encoder-target ---------------------------------------------------------

double encoder_target_loss(const imaging::ImageTensor& x_adv,
                           const EncoderHandle& encoder,
                           const std::vector<float>& z_target) {
  EncoderTargetLoss loss(encoder, z_target);
  return loss.eval(x_adv, nullptr, 0);
}

EncoderTargetLoss::EncoderTargetLoss(EncoderHandle encoder,
                                     std::vector<float> z_target)
    : encoder_(std::move(encoder)), z_target_(std::move(z_target)) {
  PURI_CHECK(encoder_.latent_dim > 0, "EncoderTargetLoss: latent_dim must be set");
  PURI_CHECK(static_cast<int>(z_target_.size()) == encoder_.latent_dim,
             "EncoderTargetLoss: target latent does not match encoder dimension");
}

double EncoderTargetLoss::eval(const imaging::ImageTensor& x,
                               std::vector<float>* grad, int) const {
  nn::Tensor input = toy::image_to_tensor(x, grad != nullptr);
  nn::Tensor z = encoder_.encode(input);
  PURI_CHECK(z.size() == encoder_.latent_dim,
             "encoder_target_loss: encoder output dimension mismatch");
  nn::Tensor target =
      nn::Tensor::from_vector(z_target_, 1, encoder_.latent_dim);
  nn::Tensor loss = nn::mse(z, target);  // mean over d == |.|^2 / d
  if (grad != nullptr) {
    loss.backward();
    const auto& g = input.grad();
    grad->assign(g.data(), g.data() + g.size());
  }
  return loss.item();
}

// --- denoising ascent -------------------------------------------------------

namespace {

double denoising_loss_impl(const imaging::ImageTensor& x_adv,
                           const DiffusionHandle& model, std::uint64_t seed,
                           std::vector<float>* grad) {
  PURI_CHECK(model.timesteps >= 1 && model.predict_noise && model.alpha_bar,
             "denoising_ascent_loss: model lacks the training-loss interface");
  Rng rng(seed);
  const int t = rng.uniform_int(0, model.timesteps - 1);
  const float ab = model.alpha_bar(t);
  const float sqrt_ab = std::sqrt(ab);
  const float sqrt_1mab = std::sqrt(1.0f - ab);

  const Eigen::Index n = static_cast<Eigen::Index>(x_adv.size());
  nn::Array noise(n);
  for (Eigen::Index i = 0; i < n; ++i) noise[i] = rng.normalf();

  nn::Tensor input = toy::image_to_tensor(x_adv, grad != nullptr);
  nn::Tensor eps = nn::Tensor::from_array(noise, 1, static_cast<int>(n));
  nn::Tensor x_t = nn::add(nn::scale(input, sqrt_ab), nn::scale(eps, sqrt_1mab));
  nn::Tensor pred = model.predict_noise(x_t, t);
  PURI_CHECK(pred.size() == n, "denoising_ascent_loss: prediction shape mismatch");
  nn::Tensor loss = nn::mse(pred, eps);
  if (grad != nullptr) {
    loss.backward();
    const auto& g = input.grad();
    grad->assign(g.data(), g.data() + g.size());
  }
  return loss.item();
}

}  // namespace

double denoising_ascent_loss(const imaging::ImageTensor& x_adv,
                             const DiffusionHandle& model, std::uint64_t seed) {
  return denoising_loss_impl(x_adv, model, seed, nullptr);
}

DenoisingAscentLoss::DenoisingAscentLoss(DiffusionHandle model, std::uint64_t seed)
    : model_(std::move(model)), seed_(seed) {
  PURI_CHECK(model_.timesteps >= 1 && model_.predict_noise && model_.alpha_bar,
             "DenoisingAscentLoss: model lacks the training-loss interface");
}

double DenoisingAscentLoss::eval(const imaging::ImageTensor& x,
                                 std::vector<float>* grad, int iteration) const {
  // Fresh timestep and noise draw per iteration, chained off one seed.
  const std::uint64_t it_seed =
      derive_seed(seed_, "pgd-iter-" + std::to_string(iteration));
  return denoising_loss_impl(x, model_, it_seed, grad);
}

// --- persistence -------------------------------------------------------------

SavedProtection save_protection(const ProtectionRecord& record,
                                const std::string& png_path,
                                const std::string& json_path) {
  SavedProtection saved;
  saved.png_path = png_path;
  saved.json_path = json_path;
  const auto adv = record.adversarial();
  saved.quantization_flagged =
      imaging::save_image_lossless(adv, png_path).quantization_flagged;
  // Budget must survive the grid snap applied at save time.
  const auto reloaded_delta_bound =
      record.budget.epsilon() + 1.1920929e-7f;
  PURI_CHECK(record.delta_linf() <= reloaded_delta_bound,
             "save_protection: budget violated before persistence");

  json meta;
  meta["budget_numerator"] = record.budget.numerator();
  meta["alpha_numerator"] = record.config.alpha_numerator;
  meta["iterations"] = record.config.iterations;
  meta["loss_kind"] = loss_kind_name(record.loss_kind);
  meta["surrogate_id"] = record.surrogate_id;
  meta["final_loss"] = record.final_loss;
  meta["seed"] = record.config.seed;
  meta["aborted"] = record.aborted;
  if (record.aborted) {
    meta["abort_iteration"] = record.abort_iteration;
    meta["abort_reason"] = record.abort_reason;
  }
  meta["quantization_flagged"] = saved.quantization_flagged;
  meta["loss_trajectory"] = record.loss_trajectory;
  std::ofstream os(json_path);
  PURI_CHECK(os.good(), "save_protection: cannot write " + json_path);
  os << meta.dump(2) << '\n';
  return saved;
}

ProtectionRecord load_protection(const imaging::ImageTensor& clean,
                                 const std::string& png_path,
                                 const std::string& json_path) {
  ProtectionRecord record;
  record.clean = clean;
  const auto adv = imaging::load_image(png_path);
  PURI_CHECK(adv.same_shape(clean),
             "load_protection: stored image shape does not match clean image");
  std::ifstream is(json_path);
  PURI_CHECK(is.good(), "load_protection: cannot read " + json_path);
  json meta = json::parse(is);
  record.budget = imaging::PerturbationBudget(meta.at("budget_numerator").get<int>());
  record.config.budget = record.budget;
  record.config.alpha_numerator = meta.at("alpha_numerator").get<int>();
  record.config.iterations = meta.at("iterations").get<int>();
  record.config.seed = meta.at("seed").get<std::uint64_t>();
  record.surrogate_id = meta.at("surrogate_id").get<std::string>();
  record.final_loss = meta.at("final_loss").get<double>();
  const std::string kind = meta.at("loss_kind").get<std::string>();
  record.loss_kind = kind == "encoder-target" ? LossKind::kEncoderTarget
                     : kind == "denoising-ascent" ? LossKind::kDenoisingAscent
                                                  : LossKind::kExternal;
  if (meta.contains("loss_trajectory")) {
    record.loss_trajectory = meta["loss_trajectory"].get<std::vector<double>>();
  }
  record.delta.resize(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    record.delta[i] = adv.data()[i] - clean.data()[i];
  }
  PURI_CHECK(record.delta_linf() <= record.budget.epsilon() + 1.1920929e-7f,
             "load_protection: stored perturbation violates its budget");
  return record;
}

}  // namespace puri::protect
