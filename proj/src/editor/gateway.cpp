#include "puri/editor/gateway.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nlohmann/json.hpp"
#include "puri/common/digest.hpp"
#include "puri/common/rng.hpp"
#include "puri/toy/bridge.hpp"

namespace puri::editor {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string EditTask::prompt_key() const {
  return short_digest(sha256_hex(prompt));
}

const char* setting_tag_name(SettingTag tag) {
  switch (tag) {
    case SettingTag::kMatchedSurrogate: return "matched-surrogate";
    case SettingTag::kEditorMismatch: return "editor-mismatch";
    case SettingTag::kPreprocessThenEdit: return "preprocess-then-edit";
  }
  return "unknown";
}

SettingTag classify_setting(const std::string& surrogate_id,
                            const std::string& target_editor_id,
                            const std::string& purifier_digest) {
  if (purifier_digest != purify::identity_digest()) {
    return SettingTag::kPreprocessThenEdit;
  }
  return surrogate_id == target_editor_id ? SettingTag::kMatchedSurrogate
                                          : SettingTag::kEditorMismatch;
}

MismatchSetting make_setting(SettingTag tag, const std::string& surrogate_id,
                             const std::string& target_editor_id,
                             const std::string& purifier_digest) {
  if (tag == SettingTag::kMatchedSurrogate) {
    PURI_CHECK(surrogate_id == target_editor_id,
               "make_setting: matched-surrogate requires surrogate == target");
    PURI_CHECK(purifier_digest == purify::identity_digest(),
               "make_setting: matched-surrogate requires the identity purifier");
  }
  PURI_CHECK(classify_setting(surrogate_id, target_editor_id, purifier_digest) == tag,
             "make_setting: tag does not match the classification rule");
  return MismatchSetting{tag, surrogate_id, target_editor_id, purifier_digest};
}

ToyVaeEditor::ToyVaeEditor(std::string id, std::string family,
                           std::shared_ptr<toy::ToyAutoencoder> ae,
                           float prompt_gain)
    : id_(std::move(id)), family_(std::move(family)), ae_(std::move(ae)),
      prompt_gain_(prompt_gain) {}

imaging::ImageTensor ToyVaeEditor::edit(const imaging::ImageTensor& img,
                                        const EditTask& task,
                                        const EditorSpec& spec) const {
  task.validate(img);
  PURI_CHECK(img.height() == ae_->image_size() && img.width() == ae_->image_size(),
             "ToyVaeEditor: image size does not match the editor backbone");
  const auto z = ae_->encode_image(img);

  // Deterministic prompt-keyed latent shift; the seed is the run-level
  // sampling seed, fixed across all cells.
  std::vector<float> shifted(z);
  Rng rng(derive_seed(spec.seed, id_ + "|prompt|" + task.prompt));
  for (auto& v : shifted) v += prompt_gain_ * rng.normalf();
  const auto fill = ae_->decode_latent(shifted);

  imaging::ImageTensor out = img;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (task.mask.at(y, x)) {
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = fill.at(y, x, c);
      }
    }
  }
  return out;
}

std::string ToyVaeEditor::weights_digest() const {
  std::ostringstream oss;
  oss << ae_->encoder_digest() << ':' << ae_->decoder_digest() << ":gain="
      << prompt_gain_;
  return sha256_hex(oss.str());
}

IdentityEditor::IdentityEditor(std::string id) : id_(std::move(id)) {}

ExternalEditorManifest load_editor_manifest(const std::string& path) {
  std::ifstream is(path);
  PURI_CHECK(is.good(), "load_editor_manifest: cannot read " + path);
  json j = json::parse(is);
  ExternalEditorManifest m;
  m.editor_id = j.at("editor_id").get<std::string>();
  m.family = j.at("family").get<std::string>();
  m.command = j.at("command").get<std::string>();
  m.tolerance = j.value("tolerance", 0.0);
  m.concurrency = j.value("concurrency", 1);
  return m;
}

ExternalProcessEditor::ExternalProcessEditor(ExternalEditorManifest manifest,
                                             std::string scratch_dir)
    : manifest_(std::move(manifest)), scratch_dir_(std::move(scratch_dir)) {}

imaging::ImageTensor ExternalProcessEditor::edit(const imaging::ImageTensor& img,
                                                 const EditTask& task,
                                                 const EditorSpec& spec) const {
  task.validate(img);
  fs::create_directories(scratch_dir_);
  const std::string stem =
      short_digest(sha256_hex(manifest_.editor_id + task.task_id()));
  const fs::path input = fs::path(scratch_dir_) / (stem + "_in.png");
  const fs::path mask = fs::path(scratch_dir_) / (stem + "_mask.png");
  const fs::path output = fs::path(scratch_dir_) / (stem + "_out.png");
  imaging::save_image_lossless(img, input.string());
  imaging::save_mask(task.mask, mask.string());
  std::error_code ec;
  fs::remove(output, ec);

  std::ostringstream cmd;
  cmd << manifest_.command << " '" << input.string() << "' '" << mask.string()
      << "' '" << task.prompt << "' " << spec.seed << ' ' << spec.sampler_steps
      << ' ' << spec.guidance_scale << " '" << output.string() << "'";
  const int rc = std::system(cmd.str().c_str());
  if (rc != 0 || !fs::exists(output)) {
    throw EditorUnavailable("external editor '" + manifest_.editor_id +
                            "' failed (exit " + std::to_string(rc) + ")");
  }
  return imaging::load_image(output.string());
}

imaging::ImageTensor BaselineCache::get_or_compute(const std::string& key,
                                                   const ComputeFn& fn) {
  auto it = cache_.find(key);
  if (it != cache_.end()) {
    ++hits_;
    return it->second;
  }
  ++misses_;
  imaging::ImageTensor value = fn();
  cache_.emplace(key, value);
  return value;
}

std::string baseline_cache_key(const Editor& editor, const EditorSpec& spec,
                               const imaging::ImageTensor& img,
                               const EditTask& task) {
  std::ostringstream oss;
  oss << editor.id() << '|' << editor.weights_digest() << '|'
      << sha256_hex(std::span<const float>(img.data().data(), img.data().size()))
      << '|' << task.task_id() << '|' << spec.seed << '|' << spec.sampler_steps
      << '|' << spec.guidance_scale;
  return sha256_hex(oss.str());
}

imaging::ImageTensor clean_baseline(const Editor& editor,
                                    const imaging::ImageTensor& x_clean,
                                    const EditTask& task, const EditorSpec& spec,
                                    BaselineCache* cache) {
  if (cache == nullptr) return editor.edit(x_clean, task, spec);
  const std::string key = baseline_cache_key(editor, spec, x_clean, task);
  return cache->get_or_compute(key,
                               [&] { return editor.edit(x_clean, task, spec); });
}

imaging::ImageTensor ResolvedPipeline::run(const imaging::ImageTensor& x_adv,
                                           const EditTask& task,
                                           const EditorSpec& spec,
                                           std::uint64_t purify_seed) const {
  PURI_CHECK(editor != nullptr, "ResolvedPipeline: editor not bound");
  const auto purified = purifier.apply(x_adv, purify_seed);
  return editor->edit(purified, task, spec);
}

ResolvedPipeline resolve_setting(const MismatchSetting& setting,
                                 purify::PurifierOp purifier, const Editor& editor) {
  PURI_CHECK(setting.purifier_digest == purifier.config_digest(),
             "resolve_setting: purifier digest does not match the setting");
  PURI_CHECK(setting.target_editor_id == editor.id(),
             "resolve_setting: editor id does not match the setting");
  // Re-validates the taxonomy; matched-surrogate with a non-identity purifier
  // cannot pass this gate.
  make_setting(setting.tag, setting.surrogate_id, setting.target_editor_id,
               setting.purifier_digest);
  ResolvedPipeline p;
  p.setting = setting;
  p.purifier = std::move(purifier);
  p.editor = &editor;
  return p;
}

}  // namespace puri::editor
