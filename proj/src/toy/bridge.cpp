#include "puri/toy/bridge.hpp"

#include <algorithm>

namespace puri::toy {

nn::Tensor image_to_tensor(const imaging::ImageTensor& img, bool requires_grad) {
  nn::Array a(static_cast<Eigen::Index>(img.size()));
  for (std::size_t i = 0; i < img.size(); ++i) a[i] = img.data()[i];
  return nn::Tensor::from_array(std::move(a), 1, static_cast<int>(img.size()),
                                requires_grad);
}

imaging::ImageTensor tensor_to_image(const nn::Tensor& t, int height, int width) {
  PURI_CHECK(t.size() == static_cast<Eigen::Index>(height) * width * 3,
             "tensor_to_image: size mismatch");
  imaging::ImageTensor img(height, width);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img.data()[i] = std::clamp(t.value()[static_cast<Eigen::Index>(i)], 0.0f, 1.0f);
  }
  return img;
}

std::vector<int> patchify_indices(int height, int width, int patch) {
  PURI_CHECK(height % patch == 0 && width % patch == 0,
             "patchify: dimensions must be multiples of the patch size");
  const int py = height / patch;
  const int px = width / patch;
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(height) * width * 3);
  for (int p = 0; p < py * px; ++p) {
    const int y0 = (p / px) * patch;
    const int x0 = (p % px) * patch;
    for (int dy = 0; dy < patch; ++dy) {
      for (int dx = 0; dx < patch; ++dx) {
        for (int c = 0; c < 3; ++c) {
          idx.push_back(((y0 + dy) * width + (x0 + dx)) * 3 + c);
        }
      }
    }
  }
  return idx;
}

std::vector<int> unpatchify_indices(int height, int width, int patch) {
  const auto fwd = patchify_indices(height, width, patch);
  std::vector<int> inv(fwd.size());
  for (std::size_t i = 0; i < fwd.size(); ++i) {
    inv[fwd[i]] = static_cast<int>(i);
  }
  return inv;
}

}  // namespace puri::toy
