#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "puri/imaging/image.hpp"
#include "puri/purify/purifier.hpp"
#include "puri/toy/autoencoder.hpp"

namespace puri::editor {

// The downstream editor backend could not run (missing binary, bad exit);
// the harness turns this into a skipped cell, never a failure.
struct EditorUnavailable : std::runtime_error {
  explicit EditorUnavailable(const std::string& msg) : std::runtime_error(msg) {}
};

struct EditorSpec {
  std::string editor_id;
  std::string family;
  int sampler_steps = 50;
  double guidance_scale = 7.5;
  std::uint64_t seed = 0;  // fixed per run
};

struct EditTask {
  std::string image_id;
  std::string prompt;
  std::string mask_id;
  imaging::Mask mask;

  void validate(const imaging::ImageTensor& img) const {
    PURI_CHECK(!prompt.empty(), "EditTask: prompt must be non-empty");
    PURI_CHECK(mask.matches(img), "EditTask: mask shape does not match image");
  }
  std::string task_id() const { return image_id + "|" + prompt_key() + "|" + mask_id; }
  std::string prompt_key() const;
};

enum class SettingTag { kMatchedSurrogate, kEditorMismatch, kPreprocessThenEdit };

const char* setting_tag_name(SettingTag tag);

struct MismatchSetting {
  SettingTag tag;
  std::string surrogate_id;
  std::string target_editor_id;
  std::string purifier_digest;
};

// The three-way partition: any non-identity purifier is preprocess-then-edit;
// identity splits on whether the target matches the surrogate.
SettingTag classify_setting(const std::string& surrogate_id,
                            const std::string& target_editor_id,
                            const std::string& purifier_digest);

// Validated constructor; a matched-surrogate tag with a non-identity purifier
// is a taxonomy violation.
MismatchSetting make_setting(SettingTag tag, const std::string& surrogate_id,
                             const std::string& target_editor_id,
                             const std::string& purifier_digest);

// Downstream editor interface: x_edit = editor(image, task). Pixels outside
// the mask must be reproduced from the input within the declared tolerance
// (exactly, for the built-in toys).
class Editor {
 public:
  virtual ~Editor() = default;
  virtual const std::string& id() const = 0;
  virtual const std::string& family() const = 0;
  virtual imaging::ImageTensor edit(const imaging::ImageTensor& img,
                                    const EditTask& task,
                                    const EditorSpec& spec) const = 0;
  virtual double outside_mask_tolerance() const { return 0.0; }
  virtual std::string weights_digest() const = 0;
};

// Deterministic inpainting editor over a toy latent autoencoder: the masked
// region is filled from the decode of the prompt-shifted latent, everything
// else is copied from the input. The encoder doubles as the PGD surrogate.
class ToyVaeEditor : public Editor {
 public:
  ToyVaeEditor(std::string id, std::string family,
               std::shared_ptr<toy::ToyAutoencoder> ae, float prompt_gain);

  const std::string& id() const override { return id_; }
  const std::string& family() const override { return family_; }
  imaging::ImageTensor edit(const imaging::ImageTensor& img, const EditTask& task,
                            const EditorSpec& spec) const override;
  std::string weights_digest() const override;

  const std::shared_ptr<toy::ToyAutoencoder>& autoencoder() const { return ae_; }
  float prompt_gain() const { return prompt_gain_; }

 private:
  std::string id_;
  std::string family_;
  std::shared_ptr<toy::ToyAutoencoder> ae_;
  float prompt_gain_;
};

// Degenerate editor that returns its input; the pipeline-collapse oracle.
class IdentityEditor : public Editor {
 public:
  explicit IdentityEditor(std::string id = "toy-identity");
  const std::string& id() const override { return id_; }
  const std::string& family() const override { return family_; }
  imaging::ImageTensor edit(const imaging::ImageTensor& img, const EditTask&,
                            const EditorSpec&) const override {
    return img;
  }
  std::string weights_digest() const override { return "identity"; }

 private:
  std::string id_;
  std::string family_ = "identity";
};

// External adapter protocol: the manifest declares a command invoked as
//   command <input.png> <mask.png> <prompt> <seed> <steps> <guidance> <out.png>
struct ExternalEditorManifest {
  std::string editor_id;
  std::string family;
  std::string command;
  double tolerance = 0.0;
  int concurrency = 1;
};

ExternalEditorManifest load_editor_manifest(const std::string& path);

class ExternalProcessEditor : public Editor {
 public:
  ExternalProcessEditor(ExternalEditorManifest manifest, std::string scratch_dir);

  const std::string& id() const override { return manifest_.editor_id; }
  const std::string& family() const override { return manifest_.family; }
  imaging::ImageTensor edit(const imaging::ImageTensor& img, const EditTask& task,
                            const EditorSpec& spec) const override;
  double outside_mask_tolerance() const override { return manifest_.tolerance; }
  std::string weights_digest() const override { return "external:" + manifest_.command; }

 private:
  ExternalEditorManifest manifest_;
  std::string scratch_dir_;
};

// Clean-edit baseline x*_edit = editor(x, y): identical computation to edit,
// cached by (editor identity, image content, task, seed) and used only as the
// metric reference.
class BaselineCache {
 public:
  using ComputeFn = std::function<imaging::ImageTensor()>;

  imaging::ImageTensor get_or_compute(const std::string& key, const ComputeFn& fn);
  long hits() const { return hits_; }
  long misses() const { return misses_; }

 private:
  std::map<std::string, imaging::ImageTensor> cache_;
  long hits_ = 0;
  long misses_ = 0;
};

std::string baseline_cache_key(const Editor& editor, const EditorSpec& spec,
                               const imaging::ImageTensor& img,
                               const EditTask& task);

imaging::ImageTensor clean_baseline(const Editor& editor,
                                    const imaging::ImageTensor& x_clean,
                                    const EditTask& task, const EditorSpec& spec,
                                    BaselineCache* cache);

// Composed attacker pipeline editor(purifier(x), y) with provenance.
struct ResolvedPipeline {
  MismatchSetting setting;
  purify::PurifierOp purifier;
  const Editor* editor = nullptr;

  imaging::ImageTensor run(const imaging::ImageTensor& x_adv, const EditTask& task,
                           const EditorSpec& spec, std::uint64_t purify_seed) const;
};

ResolvedPipeline resolve_setting(const MismatchSetting& setting,
                                 purify::PurifierOp purifier, const Editor& editor);

}  // namespace puri::editor
