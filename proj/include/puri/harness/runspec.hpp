#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "puri/common/check.hpp"

namespace puri::harness {

// Declarative description of one evaluation run. Loaded from JSON; every
// field has a desk-scale default so an empty document is a valid run.
struct RunSpec {
  std::string name = "desk-default";
  std::uint64_t seed = 20250810;
  std::string output_dir = "out/desk";
  std::string asset_root;  // empty -> $PURIBENCH_ASSET_ROOT or <output_dir>/assets

  int image_size = 48;
  int benchmark_images = 6;
  int train_images = 1280;

  std::vector<std::string> protections = {"none", "encoder-target"};
  std::vector<std::string> purifiers = {"identity", "jpeg:quality=75",
                                        "gaussian:sigma=0.10", "vaetrans",
                                        "editorclean:sigma=0.10"};
  std::vector<std::string> editors = {"toy-vae-a", "toy-vae-b"};
  std::string surrogate_editor = "toy-vae-a";
  std::vector<std::string> settings = {"matched-surrogate", "editor-mismatch",
                                       "preprocess-then-edit"};

  std::vector<float> sigma_grid = {0.05f, 0.10f, 0.15f, 0.20f};
  std::vector<int> epsilon_grid = {16, 8};

  // PGD protocol
  int pgd_iterations = 100;
  int pgd_alpha = 2;

  // purifier training (defaults follow the stated protocols; desk-scale
  // learning rates are recorded in the manifest)
  float vaetrans_sigma = 0.1f;
  float vaetrans_lr = 2e-3f;
  int vaetrans_epochs = 6;
  int vaetrans_batch = 8;

  float editorclean_sigma_train = 0.1f;
  int editorclean_steps = 2000;
  int editorclean_batch = 2;
  int editorclean_rank = 32;
  float editorclean_alpha = 32.0f;
  std::uint64_t editorclean_seed = 666;
  float editorclean_lr = 2e-3f;

  // toy backbone construction/pretraining
  int toy_latent_dim = 384;
  int toy_patch_hidden = 96;
  int toy_ae_steps = 6000;
  float toy_ae_lr = 2e-3f;
  int toy_gen_pretrain_steps = 3000;
  float toy_gen_pretrain_lr = 1.5e-3f;
  int toy_core_hidden = 896;
  float toy_prompt_gain = 2.0f;
  // editor variants warm-start from the surrogate and drift by fine-tuning,
  // the desk analog of a cross-version editor
  int toy_variant_steps = 1500;

  int workers = 1;

  // Optional external scorer adapters; scores join the records by task and
  // surface as extra report columns.
  struct ScorerSpec {
    std::string id;
    std::string command;
    std::string metric;  // "ir" or "clip_score"
  };
  std::vector<ScorerSpec> scorers;

  nlohmann::json to_json() const;
  static RunSpec from_json(const nlohmann::json& j);
  static RunSpec load(const std::string& path);

  // Injects the mandatory control rows ("none" protection, identity
  // purifier) and checks the remaining invariants.
  void normalize_and_validate();

  std::string resolved_asset_root() const;
  std::string digest() const;
};

}  // namespace puri::harness
