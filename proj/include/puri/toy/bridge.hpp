#pragma once

#include "puri/imaging/image.hpp"
#include "puri/nn/tensor.hpp"

namespace puri::toy {

// Flattens an image into a (1, H*W*3) tensor for the toy models.
nn::Tensor image_to_tensor(const imaging::ImageTensor& img,
                           bool requires_grad = false);

// Inverse of image_to_tensor; values clamped to [0, 1].
imaging::ImageTensor tensor_to_image(const nn::Tensor& t, int height, int width);

// Flat-index permutation mapping patch-major layout to image layout.
// patchify: out[(p, j)] = image[pixel of patch p, offset j].
std::vector<int> patchify_indices(int height, int width, int patch);
std::vector<int> unpatchify_indices(int height, int width, int patch);

}  // namespace puri::toy
