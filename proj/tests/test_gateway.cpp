#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "puri/common/rng.hpp"
#include "puri/editor/gateway.hpp"

using namespace puri;
using namespace puri::editor;
using imaging::ImageTensor;
using imaging::Mask;

namespace {

ImageTensor random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  ImageTensor img(h, w);
  for (auto& v : img.data()) {
    v = static_cast<float>(rng.uniform_int(0, 255)) / 255.0f;
  }
  return img;
}

Mask center_mask(int size) {
  Mask m(size, size);
  for (int y = size / 4; y < 3 * size / 4; ++y) {
    for (int x = size / 4; x < 3 * size / 4; ++x) m.set(y, x, true);
  }
  return m;
}

Mask full_mask(int size) {
  Mask m(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) m.set(y, x, true);
  }
  return m;
}

EditTask make_task(const std::string& image_id, const std::string& prompt, Mask mask,
                   const std::string& mask_id = "m0") {
  EditTask t;
  t.image_id = image_id;
  t.prompt = prompt;
  t.mask_id = mask_id;
  t.mask = std::move(mask);
  return t;
}

std::shared_ptr<toy::ToyAutoencoder> small_ae(std::uint64_t seed) {
  toy::ToyAutoencoder::Config cfg;
  cfg.image_size = 16;
  cfg.patch = 8;
  cfg.patch_hidden = 16;
  cfg.latent_dim = 32;
  cfg.seed = seed;
  return std::make_shared<toy::ToyAutoencoder>(cfg);
}

// Deterministic prompt-keyed fill, hand-computable for the oracle test.
class PromptColorEditor : public Editor {
 public:
  const std::string& id() const override { return id_; }
  const std::string& family() const override { return family_; }
  imaging::ImageTensor edit(const imaging::ImageTensor& img, const EditTask& task,
                            const EditorSpec&) const override {
    task.validate(img);
    const float color = static_cast<float>(fnv1a(task.prompt) % 256) / 255.0f;
    ImageTensor out = img;
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        if (task.mask.at(y, x)) {
          for (int c = 0; c < 3; ++c) out.at(y, x, c) = color;
        }
      }
    }
    return out;
  }
  std::string weights_digest() const override { return "prompt-color"; }

 private:
  std::string id_ = "prompt-color";
  std::string family_ = "test";
};

}  // namespace

TEST_CASE("EditorSpec defaults match the editing protocol") {
  EditorSpec spec;
  CHECK(spec.sampler_steps == 50);
  CHECK(spec.guidance_scale == doctest::Approx(7.5));
}

TEST_CASE("identity editor returns its input for any prompt") {
  IdentityEditor editor;
  const auto img = random_image(16, 16, 1);
  const auto task = make_task("a", "whatever prompt", center_mask(16));
  EditorSpec spec;
  CHECK(editor.edit(img, task, spec).data() == img.data());
}

TEST_CASE("toy editor: determinism, inpainting contract, prompt sensitivity") {
  ToyVaeEditor editor("toy-vae-a", "toy-vae", small_ae(5), 1.0f);
  const auto img = random_image(16, 16, 2);
  const auto task = make_task("a", "add a red scarf", center_mask(16));
  EditorSpec spec;
  spec.seed = 99;

  const auto out1 = editor.edit(img, task, spec);
  const auto out2 = editor.edit(img, task, spec);
  CHECK(out1.data() == out2.data());

  // Exact reproduction outside the mask.
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      if (!task.mask.at(y, x)) {
        for (int c = 0; c < 3; ++c) CHECK(out1.at(y, x, c) == img.at(y, x, c));
      }
    }
  }

  // Different prompts produce different fills.
  const auto other = editor.edit(img, make_task("a", "make it snow", center_mask(16)),
                                 spec);
  CHECK(out1.data() != other.data());

  // Sensitive to input perturbations (the protected edit differs from the
  // clean edit).
  const auto noisy = imaging::add_gaussian_noise(img, 0.05f, 7);
  const auto out_noisy = editor.edit(noisy, task, spec);
  bool differs_inside = false;
  for (int y = 0; y < 16 && !differs_inside; ++y) {
    for (int x = 0; x < 16 && !differs_inside; ++x) {
      if (task.mask.at(y, x) && out_noisy.at(y, x, 0) != out1.at(y, x, 0)) {
        differs_inside = true;
      }
    }
  }
  CHECK(differs_inside);

  // Empty prompt violates the task contract.
  CHECK_THROWS_AS(editor.edit(img, make_task("a", "", center_mask(16)), spec),
                  ContractError);
}

TEST_CASE("full-coverage mask with a prompt-keyed color editor matches the oracle") {
  // DERIVED: hand-computable toy editor.
  PromptColorEditor editor;
  const auto img = random_image(8, 8, 3);
  const std::string prompt = "turn the subject into a statue";
  const auto task = make_task("a", prompt, full_mask(8));
  EditorSpec spec;
  const auto out = editor.edit(img, task, spec);
  const float want = static_cast<float>(fnv1a(prompt) % 256) / 255.0f;
  for (float v : out.data()) CHECK(v == want);
}

TEST_CASE("taxonomy classification and the three-way partition") {
  const std::string identity = purify::identity_digest();
  const std::string jpeg = purify::jpeg_purifier({75}).config_digest();

  CHECK(classify_setting("A", "A", identity) == SettingTag::kMatchedSurrogate);
  CHECK(classify_setting("A", "B", identity) == SettingTag::kEditorMismatch);
  CHECK(classify_setting("A", "B", jpeg) == SettingTag::kPreprocessThenEdit);
  CHECK(classify_setting("A", "A", jpeg) == SettingTag::kPreprocessThenEdit);

  // Property: over random triples the classification is a partition and
  // make_setting accepts exactly the classified tag.
  Rng rng(11);
  const std::vector<std::string> editors = {"A", "B", "C"};
  const std::vector<std::string> purifiers = {identity, jpeg,
                                              purify::gaussian_purifier(0.1f, 1)
                                                  .config_digest()};
  for (int trial = 0; trial < 200; ++trial) {
    const auto& s = editors[rng.uniform_int(0, 2)];
    const auto& t = editors[rng.uniform_int(0, 2)];
    const auto& p = purifiers[rng.uniform_int(0, 2)];
    const SettingTag tag = classify_setting(s, t, p);
    int matches = 0;
    if (tag == SettingTag::kMatchedSurrogate) ++matches;
    if (tag == SettingTag::kEditorMismatch) ++matches;
    if (tag == SettingTag::kPreprocessThenEdit) ++matches;
    CHECK(matches == 1);
    CHECK_NOTHROW(make_setting(tag, s, t, p));
    // Wrong tags are rejected.
    for (SettingTag other : {SettingTag::kMatchedSurrogate,
                             SettingTag::kEditorMismatch,
                             SettingTag::kPreprocessThenEdit}) {
      if (other != tag) CHECK_THROWS(make_setting(other, s, t, p));
    }
  }

  // Matched-surrogate with a non-identity purifier is a taxonomy violation.
  CHECK_THROWS_AS(make_setting(SettingTag::kMatchedSurrogate, "A", "A", jpeg),
                  ContractError);
}

TEST_CASE("resolve_setting composes purify-then-edit with provenance checks") {
  IdentityEditor editor("B");
  const auto g = purify::gaussian_purifier(0.1f, 3);
  const auto setting =
      make_setting(SettingTag::kPreprocessThenEdit, "A", "B", g.config_digest());
  const auto pipeline = resolve_setting(setting, g, editor);

  const auto img = random_image(16, 16, 4);
  const auto task = make_task("a", "p", center_mask(16));
  EditorSpec spec;
  const auto out = pipeline.run(img, task, spec, 5);
  // Identity editor: output equals the purified image.
  CHECK(out.data() == g.apply(img, 5).data());

  // Mismatched digest is rejected.
  CHECK_THROWS_AS(resolve_setting(setting, purify::identity_purifier(), editor),
                  ContractError);
}

TEST_CASE("clean baseline caching: second call is a hit") {
  ToyVaeEditor editor("toy-vae-a", "toy-vae", small_ae(6), 1.0f);
  BaselineCache cache;
  const auto img = random_image(16, 16, 5);
  const auto task = make_task("img0", "add a hat", center_mask(16));
  EditorSpec spec;
  spec.seed = 1;

  const auto b1 = clean_baseline(editor, img, task, spec, &cache);
  CHECK(cache.misses() == 1);
  CHECK(cache.hits() == 0);
  const auto b2 = clean_baseline(editor, img, task, spec, &cache);
  CHECK(cache.hits() == 1);
  CHECK(b1.data() == b2.data());

  // Different task key -> new entry.
  clean_baseline(editor, img, make_task("img0", "add a hat", center_mask(16), "m1"),
                 spec, &cache);
  CHECK(cache.misses() == 2);
}

TEST_CASE("external editor adapter protocol with a mock backend") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "puri_gateway_test";
  fs::create_directories(dir);

  // Mock editor: copies the input to the output (identity backend).
  const auto script = dir / "mock_editor.sh";
  {
    std::ofstream os(script);
    os << "#!/bin/sh\ncp \"$1\" \"$7\"\n";
  }
  fs::permissions(script, fs::perms::owner_all, fs::perm_options::add);

  ExternalEditorManifest manifest;
  manifest.editor_id = "mock-sd";
  manifest.family = "external";
  manifest.command = script.string();
  manifest.tolerance = 0.0;

  ExternalProcessEditor editor(manifest, (dir / "scratch").string());
  const auto img = random_image(16, 16, 6);
  const auto task = make_task("img0", "replace the sky", center_mask(16));
  EditorSpec spec;
  const auto out = editor.edit(img, task, spec);
  CHECK(out.data() == img.data());

  // A broken backend surfaces as EditorUnavailable (skipped cell), not a crash.
  ExternalEditorManifest broken = manifest;
  broken.command = (dir / "missing_editor.sh").string();
  ExternalProcessEditor bad(broken, (dir / "scratch").string());
  CHECK_THROWS_AS(bad.edit(img, task, spec), EditorUnavailable);

  // Manifest round trip.
  const auto mpath = dir / "editor.json";
  {
    std::ofstream os(mpath);
    os << R"({"editor_id":"mock-sd","family":"external","command":")"
       << script.string() << R"(","tolerance":0.01,"concurrency":2})";
  }
  const auto loaded = load_editor_manifest(mpath.string());
  CHECK(loaded.editor_id == "mock-sd");
  CHECK(loaded.tolerance == doctest::Approx(0.01));
  CHECK(loaded.concurrency == 2);
}
