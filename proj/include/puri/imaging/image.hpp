#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "puri/common/check.hpp"

namespace puri::imaging {

// H x W x 3 image, channels interleaved row-major, values in [0, 1].
// The universal currency of the pipeline: protections, purifiers, editors
// and metrics all speak ImageTensor.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width)
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(height) * width * 3, 0.0f) {
    PURI_CHECK(height > 0 && width > 0, "ImageTensor: dimensions must be positive");
  }
  ImageTensor(int height, int width, std::vector<float> data)
      : height_(height), width_(width), data_(std::move(data)) {
    PURI_CHECK(height > 0 && width > 0, "ImageTensor: dimensions must be positive");
    PURI_CHECK(data_.size() == static_cast<std::size_t>(height) * width * 3,
               "ImageTensor: data size does not match dimensions");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float at(int y, int x, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
  }
  float& at(int y, int x, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
  }

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  bool same_shape(const ImageTensor& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// Binary H x W mask; 1 marks the inpainting region.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width)
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(height) * width, 0) {}

  int height() const { return height_; }
  int width() const { return width_; }

  std::uint8_t at(int y, int x) const {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  void set(int y, int x, bool on) {
    data_[static_cast<std::size_t>(y) * width_ + x] = on ? 1 : 0;
  }

  const std::vector<std::uint8_t>& data() const { return data_; }

  // Fraction of pixels inside the mask.
  double coverage() const;

  bool matches(const ImageTensor& img) const {
    return height_ == img.height() && width_ == img.width();
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

// l-infinity budget in 1/255 units; k/255 with 1 <= k <= 64 so that 8-bit
// persistence can never silently violate the bound.
class PerturbationBudget {
 public:
  explicit PerturbationBudget(int numerator_255) : k_(numerator_255) {
    PURI_CHECK(k_ >= 1 && k_ <= 64,
               "PerturbationBudget: epsilon numerator must be in [1, 64]");
  }

  int numerator() const { return k_; }
  float epsilon() const { return static_cast<float>(k_) / 255.0f; }
  static const char* norm() { return "l-infinity"; }

 private:
  int k_;
};

// Two equally sized panels; left is the reference, right the generated side.
struct Diptych {
  ImageTensor left;
  ImageTensor right;
};

// --- persistence -----------------------------------------------------------

// Decodes an 8-bit PNG to [0,1] floats on the k/255 grid; grayscale and
// alpha inputs are converted to RGB. Dimensions are center-cropped to
// multiples of 8 (crop, not resize: resampling would act as an implicit
// purifier).
ImageTensor load_image(const std::string& path);

struct SaveResult {
  // Set when any value was off the k/255 grid and had to be rounded.
  bool quantization_flagged = false;
};

// Writes 8-bit RGB PNG. Lossless for grid-aligned values; off-grid values are
// rounded to the nearest grid point and flagged.
SaveResult save_image_lossless(const ImageTensor& img, const std::string& path);

Mask load_mask(const std::string& path);
void save_mask(const Mask& mask, const std::string& path);

// --- pixel arithmetic -------------------------------------------------------

// Elementwise clamp of candidate into [x - eps, x + eps] n [0, 1].
ImageTensor project_linf(const ImageTensor& x, const ImageTensor& candidate,
                         const PerturbationBudget& budget);

// max |a - b| over all pixels.
float linf_distance(const ImageTensor& a, const ImageTensor& b);

// i.i.d. N(0, sigma^2) field, one value per channel sample; deterministic for
// a fixed seed. Exposed so statistics checks can run on the pre-clamp noise.
std::vector<float> gaussian_noise_field(std::size_t count, float sigma,
                                        std::uint64_t seed);

// img + noise, clamped to [0,1].
ImageTensor add_gaussian_noise(const ImageTensor& img, float sigma,
                               std::uint64_t seed);

// Rounds every value to the nearest k/255 grid point.
ImageTensor snap_to_grid(const ImageTensor& img);
bool is_grid_aligned(const ImageTensor& img);

// Hex digest over shape plus the 8-bit representation; stable across the
// PNG round trip for grid-aligned images.
std::string content_digest(const ImageTensor& img);

// --- diptych composition ----------------------------------------------------

Diptych compose_diptych(const ImageTensor& left, const ImageTensor& right);
ImageTensor diptych_canvas(const Diptych& d);  // H x 2W concatenation
std::pair<ImageTensor, ImageTensor> split_diptych(const ImageTensor& canvas);

}  // namespace puri::imaging
