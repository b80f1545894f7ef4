#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "puri/imaging/image.hpp"
#include "puri/nn/tensor.hpp"

namespace puri::protect {

struct PgdConfig {
  imaging::PerturbationBudget budget{16};
  int alpha_numerator = 2;  // step size alpha = alpha_numerator / 255
  int iterations = 100;
  std::uint64_t seed = 0;

  float alpha() const { return static_cast<float>(alpha_numerator) / 255.0f; }
  void validate() const {
    PURI_CHECK(alpha_numerator >= 1 && alpha_numerator <= budget.numerator(),
               "PgdConfig: alpha must satisfy 0 < alpha <= epsilon");
    PURI_CHECK(iterations >= 1, "PgdConfig: iterations must be >= 1");
  }
};

enum class LossKind { kEncoderTarget, kDenoisingAscent, kExternal };
enum class Direction { kMinimize, kMaximize };

const char* loss_kind_name(LossKind kind);

// Differentiable scalar objective over an input image. Each loss declares
// whether PGD descends or ascends it.
class SurrogateLoss {
 public:
  virtual ~SurrogateLoss() = default;
  virtual const std::string& surrogate_id() const = 0;
  virtual LossKind kind() const = 0;
  virtual Direction direction() const = 0;
  // Returns the loss; when grad != nullptr also writes d(loss)/d(image),
  // laid out like ImageTensor::data(). `iteration` reseeds stochastic losses.
  virtual double eval(const imaging::ImageTensor& x, std::vector<float>* grad,
                      int iteration) const = 0;
};

struct ProtectionRecord {
  imaging::ImageTensor clean;
  std::vector<float> delta;
  imaging::PerturbationBudget budget{16};
  std::string surrogate_id;
  LossKind loss_kind = LossKind::kExternal;
  PgdConfig config;
  std::vector<double> loss_trajectory;
  double final_loss = 0.0;
  bool aborted = false;
  int abort_iteration = -1;
  std::string abort_reason;

  imaging::ImageTensor adversarial() const;
  float delta_linf() const;
};

// Signed-gradient PGD with an l-infinity ball projection after every step.
// delta starts at zero; the budget is asserted at every iterate. Outputs are
// snapped to the 1/255 grid when the clean image is grid aligned, and the
// budget is re-asserted post-snap.
ProtectionRecord pgd_optimize(const imaging::ImageTensor& x,
                              const SurrogateLoss& loss, const PgdConfig& cfg);

// --- built-in loss families ----------------------------------------------

// Opaque encoder handle: image tensor (1, n) -> latent tensor (1, d).
struct EncoderHandle {
  std::string id;
  int latent_dim = 0;
  std::function<nn::Tensor(const nn::Tensor&)> encode;
};

// |E(x_adv) - z_target|^2 / d. Value-only entry point for oracle checks.
double encoder_target_loss(const imaging::ImageTensor& x_adv,
                           const EncoderHandle& encoder,
                           const std::vector<float>& z_target);

// PhotoGuard-style objective: pull latents toward a target latent.
class EncoderTargetLoss : public SurrogateLoss {
 public:
  EncoderTargetLoss(EncoderHandle encoder, std::vector<float> z_target);

  const std::string& surrogate_id() const override { return encoder_.id; }
  LossKind kind() const override { return LossKind::kEncoderTarget; }
  Direction direction() const override { return Direction::kMinimize; }
  double eval(const imaging::ImageTensor& x, std::vector<float>* grad,
              int iteration) const override;

 private:
  EncoderHandle encoder_;
  std::vector<float> z_target_;
};

// Opaque diffusion surrogate exposing the noise-prediction training loss.
struct DiffusionHandle {
  std::string id;
  int timesteps = 0;
  std::function<float(int)> alpha_bar;
  std::function<nn::Tensor(const nn::Tensor&, int)> predict_noise;
};

// Single-sample estimate of the denoising training loss at a seeded uniform
// timestep. Value-only entry point for oracle checks.
double denoising_ascent_loss(const imaging::ImageTensor& x_adv,
                             const DiffusionHandle& model, std::uint64_t seed);

// AdvDM-style objective: PGD ascends the expected denoising loss.
class DenoisingAscentLoss : public SurrogateLoss {
 public:
  DenoisingAscentLoss(DiffusionHandle model, std::uint64_t seed);

  const std::string& surrogate_id() const override { return model_.id; }
  LossKind kind() const override { return LossKind::kDenoisingAscent; }
  Direction direction() const override { return Direction::kMaximize; }
  double eval(const imaging::ImageTensor& x, std::vector<float>* grad,
              int iteration) const override;

 private:
  DiffusionHandle model_;
  std::uint64_t seed_;
};

// External loss hook; the callable must declare its own direction.
class ExternalLoss : public SurrogateLoss {
 public:
  using EvalFn = std::function<double(const imaging::ImageTensor&,
                                      std::vector<float>*, int)>;
  ExternalLoss(std::string id, Direction direction, EvalFn fn)
      : id_(std::move(id)), direction_(direction), fn_(std::move(fn)) {}

  const std::string& surrogate_id() const override { return id_; }
  LossKind kind() const override { return LossKind::kExternal; }
  Direction direction() const override { return direction_; }
  double eval(const imaging::ImageTensor& x, std::vector<float>* grad,
              int iteration) const override {
    return fn_(x, grad, iteration);
  }

 private:
  std::string id_;
  Direction direction_;
  EvalFn fn_;
};

// --- persistence -----------------------------------------------------------

struct SavedProtection {
  std::string png_path;
  std::string json_path;
  bool quantization_flagged = false;
};

SavedProtection save_protection(const ProtectionRecord& record,
                                const std::string& png_path,
                                const std::string& json_path);

ProtectionRecord load_protection(const imaging::ImageTensor& clean,
                                 const std::string& png_path,
                                 const std::string& json_path);

}  // namespace puri::protect
