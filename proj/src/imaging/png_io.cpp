#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "puri/imaging/image.hpp"

namespace puri::imaging {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Reads any PNG as 8-bit RGB rows: palette/gray expanded, 16-bit stripped,
// alpha dropped. Never rejects grayscale or alpha inputs.
std::vector<std::uint8_t> read_png_rgb(const std::string& path, int& height,
                                       int& width) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DecodeError("load_image: cannot open " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw DecodeError("load_image: libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DecodeError("load_image: libpng info init failed");
  }
  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError("load_image: corrupt PNG " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  height = static_cast<int>(png_get_image_height(png, info));
  width = static_cast<int>(png_get_image_width(png, info));
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != static_cast<std::size_t>(width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError("load_image: unexpected channel layout in " + path);
  }

  pixels.resize(static_cast<std::size_t>(height) * rowbytes);
  row_ptrs.resize(height);
  for (int y = 0; y < height; ++y) row_ptrs[y] = pixels.data() + y * rowbytes;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return pixels;
}

void write_png(const std::string& path, const std::uint8_t* pixels, int height,
               int width, int channels) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DecodeError("save_image: cannot open " + path + " for writing");

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw DecodeError("save_image: libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw DecodeError("save_image: libpng info init failed");
  }
  std::vector<png_bytep> row_ptrs(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DecodeError("save_image: write failed for " + path);
  }
  png_init_io(png, fp.get());
  const int color_type =
      channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    row_ptrs[y] = const_cast<png_bytep>(
        pixels + static_cast<std::size_t>(y) * width * channels);
  }
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

ImageTensor load_image(const std::string& path) {
  int height = 0;
  int width = 0;
  const auto pixels = read_png_rgb(path, height, width);

  const int ch = height - height % 8;
  const int cw = width - width % 8;
  PURI_CHECK(ch > 0 && cw > 0, "load_image: image smaller than 8x8: " + path);
  const int y0 = (height - ch) / 2;
  const int x0 = (width - cw) / 2;

  ImageTensor img(ch, cw);
  for (int y = 0; y < ch; ++y) {
    for (int x = 0; x < cw; ++x) {
      const std::size_t src =
          (static_cast<std::size_t>(y + y0) * width + (x + x0)) * 3;
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = static_cast<float>(pixels[src + c]) / 255.0f;
      }
    }
  }
  return img;
}

SaveResult save_image_lossless(const ImageTensor& img, const std::string& path) {
  PURI_CHECK(!img.empty(), "save_image_lossless: empty image");
  SaveResult result;
  std::vector<std::uint8_t> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const float v = std::clamp(img.data()[i], 0.0f, 1.0f);
    const float scaled = v * 255.0f;
    const float rounded = std::round(scaled);
    if (std::abs(scaled - rounded) > 1e-4f) result.quantization_flagged = true;
    bytes[i] = static_cast<std::uint8_t>(rounded);
  }
  write_png(path, bytes.data(), img.height(), img.width(), 3);
  return result;
}

Mask load_mask(const std::string& path) {
  int height = 0;
  int width = 0;
  const auto pixels = read_png_rgb(path, height, width);
  Mask mask(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::uint8_t v = pixels[(static_cast<std::size_t>(y) * width + x) * 3];
      if (v != 0 && v != 255) {
        throw DecodeError("load_mask: mask values must be 0 or 255 in " + path);
      }
      mask.set(y, x, v == 255);
    }
  }
  return mask;
}

void save_mask(const Mask& mask, const std::string& path) {
  std::vector<std::uint8_t> bytes(
      static_cast<std::size_t>(mask.height()) * mask.width());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = mask.data()[i] ? 255 : 0;
  }
  write_png(path, bytes.data(), mask.height(), mask.width(), 1);
}

}  // namespace puri::imaging
