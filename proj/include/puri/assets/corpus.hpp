#pragma once

#include <string>
#include <vector>

#include "puri/imaging/image.hpp"

namespace puri::assets {

// Procedurally generated desk-scale corpus: smooth parametric scenes in three
// categories. Stands in for the benchmark photos and the public training
// images; real datasets attach through the same manifest layout.
imaging::ImageTensor synthesize_image(int size, const std::string& category,
                                      std::uint64_t seed);

// Ten fixed editing instructions spanning attribute change, replacement,
// style transfer and background alteration.
const std::vector<std::string>& default_prompts();

// Five mask variants targeting different regions and coverages.
imaging::Mask make_mask(int size, int variant);
inline constexpr int kMasksPerImage = 5;

struct ImageEntry {
  std::string id;
  std::string file;  // relative to the asset root
  std::string category;
};

struct AssetManifest {
  std::vector<ImageEntry> images;
  std::vector<std::string> prompts;
  int masks_per_image = kMasksPerImage;
  int image_size = 64;
};

struct CorpusSpec {
  int image_size = 64;
  int benchmark_images = 6;
  int train_images = 48;
  std::uint64_t seed = 101;
};

// Writes images/, masks/, train/, prompts.txt and manifest.json under root.
AssetManifest generate_assets(const std::string& root, const CorpusSpec& spec);

AssetManifest load_manifest(const std::string& root);

imaging::ImageTensor load_benchmark_image(const std::string& root,
                                          const ImageEntry& entry);
imaging::Mask load_benchmark_mask(const std::string& root, const std::string& image_id,
                                  int variant);

// All PNGs in a directory, sorted by filename.
std::vector<imaging::ImageTensor> load_images_from_dir(const std::string& dir);

// In-memory public training corpus (no disk round trip needed).
std::vector<imaging::ImageTensor> generate_training_corpus(int count, int size,
                                                           std::uint64_t seed);

}  // namespace puri::assets
