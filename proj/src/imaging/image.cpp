#include "puri/imaging/image.hpp"

#include <algorithm>
#include <cmath>

#include "puri/common/digest.hpp"
#include "puri/common/rng.hpp"

namespace puri::imaging {

double Mask::coverage() const {
  if (data_.empty()) return 0.0;
  std::size_t ones = 0;
  for (auto v : data_) ones += v;
  return static_cast<double>(ones) / static_cast<double>(data_.size());
}

ImageTensor project_linf(const ImageTensor& x, const ImageTensor& candidate,
                         const PerturbationBudget& budget) {
  PURI_CHECK(x.same_shape(candidate), "project_linf: shape mismatch");
  const float eps = budget.epsilon();
  ImageTensor out(x.height(), x.width());
  const auto& xs = x.data();
  const auto& cs = candidate.data();
  auto& os = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const float lo = std::max(0.0f, xs[i] - eps);
    const float hi = std::min(1.0f, xs[i] + eps);
    os[i] = std::clamp(cs[i], lo, hi);
  }
  return out;
}

float linf_distance(const ImageTensor& a, const ImageTensor& b) {
  PURI_CHECK(a.same_shape(b), "linf_distance: shape mismatch");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  }
  return m;
}

std::vector<float> gaussian_noise_field(std::size_t count, float sigma,
                                        std::uint64_t seed) {
  PURI_CHECK(sigma >= 0.0f, "gaussian_noise_field: sigma must be >= 0");
  std::vector<float> field(count, 0.0f);
  if (sigma == 0.0f) return field;
  Rng rng(seed);
  for (auto& v : field) v = sigma * rng.normalf();
  return field;
}

ImageTensor add_gaussian_noise(const ImageTensor& img, float sigma,
                               std::uint64_t seed) {
  auto field = gaussian_noise_field(img.size(), sigma, seed);
  ImageTensor out(img.height(), img.width());
  for (std::size_t i = 0; i < field.size(); ++i) {
    out.data()[i] = std::clamp(img.data()[i] + field[i], 0.0f, 1.0f);
  }
  return out;
}

ImageTensor snap_to_grid(const ImageTensor& img) {
  ImageTensor out(img.height(), img.width());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const float v = std::clamp(img.data()[i], 0.0f, 1.0f);
    out.data()[i] = std::round(v * 255.0f) / 255.0f;
  }
  return out;
}

bool is_grid_aligned(const ImageTensor& img) {
  for (float v : img.data()) {
    const float scaled = v * 255.0f;
    if (std::abs(scaled - std::round(scaled)) > 1e-4f) return false;
  }
  return true;
}

std::string content_digest(const ImageTensor& img) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(img.size() + 8);
  auto push_int = [&bytes](int v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  push_int(img.height());
  push_int(img.width());
  for (float v : img.data()) {
    bytes.push_back(static_cast<std::uint8_t>(
        std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  }
  return sha256_hex(std::span<const std::uint8_t>(bytes.data(), bytes.size()));
}

Diptych compose_diptych(const ImageTensor& left, const ImageTensor& right) {
  PURI_CHECK(left.same_shape(right), "compose_diptych: panel shapes differ");
  return Diptych{left, right};
}

ImageTensor diptych_canvas(const Diptych& d) {
  PURI_CHECK(d.left.same_shape(d.right), "diptych_canvas: panel shapes differ");
  const int h = d.left.height();
  const int w = d.left.width();
  ImageTensor canvas(h, 2 * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        canvas.at(y, x, c) = d.left.at(y, x, c);
        canvas.at(y, x + w, c) = d.right.at(y, x, c);
      }
    }
  }
  return canvas;
}

std::pair<ImageTensor, ImageTensor> split_diptych(const ImageTensor& canvas) {
  PURI_CHECK(canvas.width() % 2 == 0, "split_diptych: canvas width must be even");
  const int h = canvas.height();
  const int w = canvas.width() / 2;
  ImageTensor left(h, w);
  ImageTensor right(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        left.at(y, x, c) = canvas.at(y, x, c);
        right.at(y, x, c) = canvas.at(y, x + w, c);
      }
    }
  }
  return {std::move(left), std::move(right)};
}

}  // namespace puri::imaging
