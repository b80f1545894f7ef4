#include "puri/imaging/jpeg_codec.hpp"

#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdlib>
#include <vector>

namespace puri::imaging {

namespace {

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf setjmp_buffer;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(err->setjmp_buffer, 1);
}

}  // namespace

ImageTensor jpeg_roundtrip(const ImageTensor& img, int quality) {
  PURI_CHECK(quality >= 1 && quality <= 100,
             "jpeg_roundtrip: quality must be in [1, 100]");
  PURI_CHECK(!img.empty(), "jpeg_roundtrip: empty image");

  const int h = img.height();
  const int w = img.width();
  std::vector<std::uint8_t> rgb(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    rgb[i] = static_cast<std::uint8_t>(
        std::round(std::clamp(img.data()[i], 0.0f, 1.0f) * 255.0f));
  }

  // Encode.
  unsigned char* buffer = nullptr;
  unsigned long buffer_size = 0;
  {
    jpeg_compress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.setjmp_buffer)) {
      jpeg_destroy_compress(&cinfo);
      std::free(buffer);
      throw DecodeError("jpeg_roundtrip: encode failed");
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buffer, &buffer_size);
    cinfo.image_width = static_cast<JDIMENSION>(w);
    cinfo.image_height = static_cast<JDIMENSION>(h);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE /* baseline */);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
      JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.next_scanline) * w * 3;
      jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
  }

  // Decode.
  ImageTensor out(h, w);
  {
    jpeg_decompress_struct dinfo;
    JpegErrorMgr jerr;
    dinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.setjmp_buffer)) {
      jpeg_destroy_decompress(&dinfo);
      std::free(buffer);
      throw DecodeError("jpeg_roundtrip: decode failed");
    }
    jpeg_create_decompress(&dinfo);
    jpeg_mem_src(&dinfo, buffer, buffer_size);
    jpeg_read_header(&dinfo, TRUE);
    dinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&dinfo);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 3);
    while (dinfo.output_scanline < dinfo.output_height) {
      const int y = static_cast<int>(dinfo.output_scanline);
      JSAMPROW rowp = row.data();
      jpeg_read_scanlines(&dinfo, &rowp, 1);
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          out.at(y, x, c) = static_cast<float>(row[x * 3 + c]) / 255.0f;
        }
      }
    }
    jpeg_finish_decompress(&dinfo);
    jpeg_destroy_decompress(&dinfo);
  }
  std::free(buffer);
  return out;
}

}  // namespace puri::imaging
