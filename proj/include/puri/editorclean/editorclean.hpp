#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "puri/imaging/image.hpp"
#include "puri/purify/purifier.hpp"
#include "puri/toy/diptych_generator.hpp"

namespace puri::editorclean {

// The fixed denoising instruction; byte-identical everywhere, asserted by
// digest at train and inference time.
const std::string& denoise_instruction();
const std::string& denoise_instruction_digest();

struct LoraAdapterConfig {
  int rank = 32;
  float alpha = 32.0f;
  std::string init = "gaussian";
  toy::LoraTargets target_layers;
  float text_drop_prob = 0.1f;

  void validate() const {
    PURI_CHECK(rank >= 1, "LoraAdapterConfig: rank must be >= 1");
    PURI_CHECK(init == "gaussian", "LoraAdapterConfig: unsupported init tag");
    PURI_CHECK(text_drop_prob >= 0.0f && text_drop_prob <= 1.0f,
               "LoraAdapterConfig: text_drop_prob must be in [0,1]");
  }
};

struct EditorCleanTrainConfig {
  float sigma_train = 0.1f;
  int batch_size = 2;
  int steps = 2000;
  std::uint64_t seed = 666;
  float learning_rate = 2e-3f;  // adaptive optimizer setting, logged in manifests

  void validate() const {
    PURI_CHECK(sigma_train > 0.0f, "EditorCleanTrainConfig: sigma_train must be > 0");
    PURI_CHECK(steps >= 1, "EditorCleanTrainConfig: steps must be >= 1");
    PURI_CHECK(batch_size >= 1, "EditorCleanTrainConfig: batch_size must be >= 1");
  }
};

struct EditorCleanInferenceConfig {
  float sigma_test = 0.10f;
  std::uint64_t seed = 0;

  void validate() const {
    PURI_CHECK(sigma_test >= 0.0f, "EditorCleanInferenceConfig: sigma_test must be >= 0");
  }
};

struct DiptychExample {
  imaging::ImageTensor left_noisy;
  imaging::ImageTensor target_right;  // the clean image
  std::string instruction;            // fixed instruction, or "" under dropout
};

// Noisy left panel, clean right target, fixed instruction; with probability
// text_drop_prob the instruction is dropped to the empty string
// (classifier-free-guidance style dropout).
std::vector<DiptychExample> build_diptych_dataset(
    const std::vector<imaging::ImageTensor>& images,
    const EditorCleanTrainConfig& cfg, float text_drop_prob = 0.1f);

struct AdaptedGenerator {
  std::shared_ptr<toy::ToyDiptychGenerator> generator;
  std::string base_digest;
  std::string adapter_digest;
  std::vector<double> trajectory;
  LoraAdapterConfig adapter;
  EditorCleanTrainConfig train_config;
};

// Attaches a low-rank adapter and trains only its parameters on the squared
// reconstruction error of the right panel. Base weights are hash-checked
// before and after; any drift is a hard failure. Enforces the trainable
// parameter ratio <= 0.5% of the base.
AdaptedGenerator train_lora(std::shared_ptr<toy::ToyDiptychGenerator> generator,
                            const std::vector<DiptychExample>& data,
                            const LoraAdapterConfig& adapter,
                            const EditorCleanTrainConfig& cfg);

// Inference: inject Gaussian noise at sigma_test, compose the diptych with a
// masked right panel, generate the right panel under the fixed instruction,
// and return it.
imaging::ImageTensor editor_clean_purify(const imaging::ImageTensor& x_adv,
                                         const AdaptedGenerator& model,
                                         const EditorCleanInferenceConfig& icfg);

// Runs editor_clean_purify once per sigma; duplicate sigmas collapse to one
// entry keyed by config digest.
std::map<std::string, std::vector<imaging::ImageTensor>> sigma_ablation_grid(
    const std::vector<imaging::ImageTensor>& x_adv_set,
    const AdaptedGenerator& model, const std::vector<float>& sigmas,
    std::uint64_t seed);

purify::PurifierOp make_editorclean_purifier(std::shared_ptr<AdaptedGenerator> model,
                                             float sigma_test);

void save_adapted_generator(AdaptedGenerator& model, const std::string& params_path,
                            const std::string& manifest_path,
                            const std::string& backbone_id);

}  // namespace puri::editorclean
