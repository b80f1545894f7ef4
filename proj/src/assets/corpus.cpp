#include "puri/assets/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "nlohmann/json.hpp"
#include "puri/common/rng.hpp"

namespace puri::assets {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr float kTau = 6.2831853f;

struct Blob {
  float cx, cy, rx, ry;  // in [0,1] image coordinates
  float color[3];
  float softness;
};

float smoothstep(float edge0, float edge1, float x) {
  const float t = std::clamp((x - edge0) / (edge1 - edge0), 0.0f, 1.0f);
  return t * t * (3.0f - 2.0f * t);
}

void paint_blob(imaging::ImageTensor& img, const Blob& b) {
  const int size = img.height();
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const float dx = (static_cast<float>(x) / size - b.cx) / b.rx;
      const float dy = (static_cast<float>(y) / size - b.cy) / b.ry;
      const float d = std::sqrt(dx * dx + dy * dy);
      const float w = 1.0f - smoothstep(1.0f - b.softness, 1.0f, d);
      if (w <= 0.0f) continue;
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = (1.0f - w) * img.at(y, x, c) + w * b.color[c];
      }
    }
  }
}

void random_color(Rng& rng, float* out, float lo, float hi) {
  for (int c = 0; c < 3; ++c) out[c] = static_cast<float>(rng.uniform(lo, hi));
}

}  // namespace

imaging::ImageTensor synthesize_image(int size, const std::string& category,
                                      std::uint64_t seed) {
  Rng rng(seed);
  imaging::ImageTensor img(size, size);

  // Smooth background: base color, linear gradient, one low-frequency wave.
  float base[3], gx[3], gy[3];
  random_color(rng, base, 0.25f, 0.75f);
  for (int c = 0; c < 3; ++c) {
    gx[c] = static_cast<float>(rng.uniform(-0.25, 0.25));
    gy[c] = static_cast<float>(rng.uniform(-0.25, 0.25));
  }
  const float amp = static_cast<float>(rng.uniform(0.02, 0.06));
  const float fx = static_cast<float>(rng.uniform(0.5, 2.0));
  const float fy = static_cast<float>(rng.uniform(0.5, 2.0));
  const float phase = static_cast<float>(rng.uniform(0.0, kTau));
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const float u = static_cast<float>(x) / size;
      const float v = static_cast<float>(y) / size;
      const float wave = amp * std::sin(kTau * (fx * u + fy * v) + phase);
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = std::clamp(base[c] + gx[c] * u + gy[c] * v + wave, 0.0f, 1.0f);
      }
    }
  }

  if (category == "portrait") {
    Blob head{0.5f + static_cast<float>(rng.uniform(-0.06, 0.06)),
              0.42f + static_cast<float>(rng.uniform(-0.05, 0.05)),
              0.22f, 0.28f, {}, 0.25f};
    random_color(rng, head.color, 0.45f, 0.9f);
    Blob torso{0.5f, 0.95f, 0.35f, 0.3f, {}, 0.3f};
    random_color(rng, torso.color, 0.15f, 0.6f);
    paint_blob(img, torso);
    paint_blob(img, head);
    for (int e = 0; e < 2; ++e) {
      Blob eye{head.cx + (e == 0 ? -0.08f : 0.08f), head.cy - 0.03f,
               0.035f, 0.035f, {0.08f, 0.08f, 0.1f}, 0.5f};
      paint_blob(img, eye);
    }
  } else if (category == "object") {
    const int blocks = 2;
    for (int b = 0; b < blocks; ++b) {
      Blob block{static_cast<float>(rng.uniform(0.25, 0.75)),
                 static_cast<float>(rng.uniform(0.3, 0.8)),
                 static_cast<float>(rng.uniform(0.12, 0.3)),
                 static_cast<float>(rng.uniform(0.1, 0.25)), {}, 0.15f};
      random_color(rng, block.color, 0.2f, 0.95f);
      paint_blob(img, block);
    }
  } else {  // animal
    Blob body{0.45f, 0.62f, 0.3f, 0.2f, {}, 0.25f};
    random_color(rng, body.color, 0.35f, 0.8f);
    Blob head{body.cx + 0.26f, body.cy - 0.18f, 0.13f, 0.13f, {}, 0.3f};
    for (int c = 0; c < 3; ++c) head.color[c] = std::min(1.0f, body.color[c] * 1.1f);
    paint_blob(img, body);
    paint_blob(img, head);
    for (int e = 0; e < 2; ++e) {
      Blob ear{head.cx + (e == 0 ? -0.07f : 0.05f), head.cy - 0.12f,
               0.045f, 0.07f, {}, 0.4f};
      for (int c = 0; c < 3; ++c) ear.color[c] = body.color[c] * 0.8f;
      paint_blob(img, ear);
    }
  }

  // Grid alignment keeps the save/load round trip exact.
  return imaging::snap_to_grid(img);
}

const std::vector<std::string>& default_prompts() {
  static const std::vector<std::string> prompts = {
      "make the subject smile warmly",
      "replace the subject with a marble statue",
      "turn the scene into a watercolor painting",
      "change the background to a sunset sky",
      "add a red scarf around the subject",
      "replace the subject with a bouquet of flowers",
      "render the scene in the style of an oil painting",
      "change the background to a snowy forest",
      "give the subject golden armor",
      "turn the subject into a bronze sculpture"};
  return prompts;
}

imaging::Mask make_mask(int size, int variant) {
  PURI_CHECK(variant >= 0 && variant < kMasksPerImage, "make_mask: unknown variant");
  imaging::Mask mask(size, size);
  auto box = [&](float x0, float y0, float x1, float y1) {
    for (int y = static_cast<int>(y0 * size); y < static_cast<int>(y1 * size); ++y) {
      for (int x = static_cast<int>(x0 * size); x < static_cast<int>(x1 * size); ++x) {
        mask.set(y, x, true);
      }
    }
  };
  switch (variant) {
    case 0:  // centered box
      box(0.25f, 0.25f, 0.75f, 0.75f);
      break;
    case 1:  // left strip
      box(0.0f, 0.0f, 0.38f, 1.0f);
      break;
    case 2:  // bottom strip
      box(0.0f, 0.6f, 1.0f, 1.0f);
      break;
    case 3: {  // off-center ellipse
      const float cx = 0.6f, cy = 0.4f, rx = 0.34f, ry = 0.3f;
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          const float dx = (static_cast<float>(x) / size - cx) / rx;
          const float dy = (static_cast<float>(y) / size - cy) / ry;
          if (dx * dx + dy * dy <= 1.0f) mask.set(y, x, true);
        }
      }
      break;
    }
    case 4:  // two corners, large coverage
      box(0.0f, 0.0f, 0.5f, 0.5f);
      box(0.5f, 0.5f, 1.0f, 1.0f);
      break;
  }
  return mask;
}

AssetManifest generate_assets(const std::string& root, const CorpusSpec& spec) {
  const std::vector<std::string> categories = {"portrait", "object", "animal"};
  fs::create_directories(fs::path(root) / "images");
  fs::create_directories(fs::path(root) / "masks");
  fs::create_directories(fs::path(root) / "train");

  AssetManifest manifest;
  manifest.image_size = spec.image_size;
  manifest.prompts = default_prompts();

  for (int i = 0; i < spec.benchmark_images; ++i) {
    ImageEntry entry;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "img%02d", i);
    entry.id = buf;
    entry.category = categories[i % categories.size()];
    entry.file = "images/" + entry.id + ".png";
    const auto img = synthesize_image(spec.image_size, entry.category,
                                      derive_seed(spec.seed, "bench-" + entry.id));
    imaging::save_image_lossless(img, (fs::path(root) / entry.file).string());
    for (int m = 0; m < kMasksPerImage; ++m) {
      const auto mask = make_mask(spec.image_size, m);
      imaging::save_mask(mask, (fs::path(root) / "masks" /
                                (entry.id + "_mask" + std::to_string(m) + ".png"))
                                   .string());
    }
    manifest.images.push_back(entry);
  }

  const auto train = generate_training_corpus(spec.train_images, spec.image_size,
                                              derive_seed(spec.seed, "train"));
  for (std::size_t i = 0; i < train.size(); ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "train%03zu.png", i);
    imaging::save_image_lossless(train[i], (fs::path(root) / "train" / buf).string());
  }

  {
    std::ofstream os(fs::path(root) / "prompts.txt");
    for (const auto& p : manifest.prompts) os << p << '\n';
  }
  {
    json j;
    j["image_size"] = manifest.image_size;
    j["masks_per_image"] = manifest.masks_per_image;
    j["prompts"] = manifest.prompts;
    j["images"] = json::array();
    for (const auto& e : manifest.images) {
      j["images"].push_back(
          {{"id", e.id}, {"file", e.file}, {"category", e.category}});
    }
    std::ofstream os(fs::path(root) / "manifest.json");
    os << j.dump(2) << '\n';
  }
  return manifest;
}

AssetManifest load_manifest(const std::string& root) {
  const fs::path path = fs::path(root) / "manifest.json";
  std::ifstream is(path);
  PURI_CHECK(is.good(), "load_manifest: cannot read " + path.string());
  json j = json::parse(is);
  AssetManifest manifest;
  manifest.image_size = j.at("image_size").get<int>();
  manifest.masks_per_image = j.at("masks_per_image").get<int>();
  manifest.prompts = j.at("prompts").get<std::vector<std::string>>();
  for (const auto& e : j.at("images")) {
    manifest.images.push_back(ImageEntry{e.at("id").get<std::string>(),
                                         e.at("file").get<std::string>(),
                                         e.at("category").get<std::string>()});
  }
  return manifest;
}

imaging::ImageTensor load_benchmark_image(const std::string& root,
                                          const ImageEntry& entry) {
  const fs::path path = fs::path(root) / entry.file;
  if (!fs::exists(path)) {
    throw ContractError("asset missing: " + path.string() + " (image " + entry.id +
                        ")");
  }
  return imaging::load_image(path.string());
}

imaging::Mask load_benchmark_mask(const std::string& root, const std::string& image_id,
                                  int variant) {
  const fs::path path = fs::path(root) / "masks" /
                        (image_id + "_mask" + std::to_string(variant) + ".png");
  if (!fs::exists(path)) {
    throw ContractError("asset missing: " + path.string() + " (mask " +
                        std::to_string(variant) + " of " + image_id + ")");
  }
  return imaging::load_mask(path.string());
}

std::vector<imaging::ImageTensor> load_images_from_dir(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".png") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  PURI_CHECK(!files.empty(), "load_images_from_dir: no PNG files in " + dir);
  std::vector<imaging::ImageTensor> images;
  images.reserve(files.size());
  for (const auto& f : files) images.push_back(imaging::load_image(f));
  return images;
}

std::vector<imaging::ImageTensor> generate_training_corpus(int count, int size,
                                                           std::uint64_t seed) {
  const std::vector<std::string> categories = {"portrait", "object", "animal"};
  std::vector<imaging::ImageTensor> images;
  images.reserve(count);
  for (int i = 0; i < count; ++i) {
    images.push_back(synthesize_image(size, categories[i % categories.size()],
                                      derive_seed(seed, "train-" + std::to_string(i))));
  }
  return images;
}

}  // namespace puri::assets
