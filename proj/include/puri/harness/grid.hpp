#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "puri/assets/corpus.hpp"
#include "puri/editor/gateway.hpp"
#include "puri/editorclean/editorclean.hpp"
#include "puri/harness/runspec.hpp"
#include "puri/harness/store.hpp"
#include "puri/metrics/metrics.hpp"
#include "puri/protect/pgd.hpp"
#include "puri/toy/denoiser.hpp"
#include "puri/vaetrans/vaetrans.hpp"

namespace puri::harness {

struct TaskSet {
  std::string asset_root;
  assets::AssetManifest manifest;
};

// Cartesian product of images x prompts x masks in deterministic order;
// missing assets fail the enumeration by name.
std::vector<editor::EditTask> enumerate_tasks(const TaskSet& ts);

// One evaluated grid cell before aggregation.
struct CellId {
  std::string protection;  // "none" or a loss-family id
  int eps = 0;             // 0 for the unprotected control
  std::string purifier_name;
  std::string purifier_digest;
  std::string editor_id;
  std::string setting;

  std::string key() const;
};

class GridRunner {
 public:
  GridRunner(RunSpec spec, ResultStore& store);

  enum class PrepareLevel {
    kAssetsOnly,  // corpus + task enumeration
    kBaseModels,  // + autoencoders/editors, denoiser, generator base
    kFull,        // + VAE-Trans encoders and the EditorClean adapter
  };

  // Generates/loads assets and trains/loads toy components up to the given
  // level, cached under the store's models directory.
  void prepare(PrepareLevel level = PrepareLevel::kFull);

  // Executes the full grid; completed records (by digest) are skipped, so
  // interrupted runs resume where they stopped.
  void run();

  struct VerifyResult {
    bool ok = false;
    std::string record_id;
    std::string detail;
  };
  // Recomputes one seeded-random cell record end-to-end from stored inputs
  // and compares byte-for-byte.
  VerifyResult verify_one(std::uint64_t pick_seed);

  const RunSpec& spec() const { return spec_; }
  const TaskSet& task_set() const { return task_set_; }

  // Building blocks the CLI verbs reuse.
  std::shared_ptr<editor::Editor> editor_by_id(const std::string& id) const;
  std::shared_ptr<vaetrans::TrainedEncoder> vaetrans_for(const std::string& editor_id) const;
  std::shared_ptr<editorclean::AdaptedGenerator> editorclean_model() const { return ec_model_; }
  std::shared_ptr<toy::ToyDiptychGenerator> base_generator() const { return generator_; }
  protect::ProtectionRecord protect_image(const imaging::ImageTensor& clean,
                                          const std::string& protection_id, int eps,
                                          std::uint64_t seed) const;
  const metrics::FeatureExtractor& extractor() const { return *extractor_; }

  // The public training corpus backing all purifier training.
  std::vector<imaging::ImageTensor> training_corpus() const;

 private:
  struct PurifierPlan {
    std::string spec_string;
    bool ablation_only = false;  // sigma-sweep rows: protections only
  };

  void prepare_assets();
  void prepare_models(PrepareLevel level);
  std::optional<purify::PurifierOp> resolve_purifier(const std::string& spec_string,
                                                     const std::string& editor_id,
                                                     std::string* skip_reason) const;
  std::vector<PurifierPlan> purifier_plans() const;
  std::uint64_t edit_seed() const;
  nlohmann::json make_cell_record(const CellId& cell, const editor::EditTask& task,
                                  const imaging::ImageTensor& purified,
                                  const std::string& purified_digest,
                                  const std::string& x_adv_digest);
  int effective_workers(const std::string& editor_id) const;
  void attach_scores(const CellId& cell, const std::vector<std::size_t>& pending,
                     std::vector<nlohmann::json>& results);

  RunSpec spec_;
  ResultStore& store_;
  TaskSet task_set_;
  std::map<std::string, imaging::ImageTensor> clean_images_;
  std::vector<editor::EditTask> tasks_;

  std::map<std::string, std::shared_ptr<toy::ToyAutoencoder>> autoencoders_;
  std::map<std::string, std::shared_ptr<editor::Editor>> editors_;
  std::map<std::string, vaetrans::VaePair> vae_pairs_;
  std::map<std::string, std::shared_ptr<vaetrans::TrainedEncoder>> vaetrans_;
  std::shared_ptr<toy::ToyDiptychGenerator> generator_;
  std::shared_ptr<editorclean::AdaptedGenerator> ec_model_;
  std::shared_ptr<toy::ToyDenoiser> denoiser_;
  std::unique_ptr<metrics::FeatureExtractor> extractor_;
  bool prepared_ = false;
};

}  // namespace puri::harness
