#include "prepatk/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <vector>

namespace prepatk {

std::string png_encode(const Image& x) {
  if (!in_unit_range(x)) throw std::invalid_argument("png_encode: values outside [0,1]; clamp first");
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(x.width());
  img.height = static_cast<png_uint_32>(x.height());
  img.format = x.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;

  // planar doubles -> interleaved bytes
  std::vector<uint8_t> rows(static_cast<size_t>(x.height()) * x.width() * x.channels());
  for (int y = 0; y < x.height(); ++y)
    for (int xx = 0; xx < x.width(); ++xx)
      for (int c = 0; c < x.channels(); ++c)
        rows[(static_cast<size_t>(y) * x.width() + xx) * x.channels() + c] = pixel_to_byte(x.at(c, y, xx));

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, rows.data(), 0, nullptr))
    throw std::runtime_error("png_encode: size probe failed");
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, rows.data(), 0, nullptr))
    throw std::runtime_error("png_encode: write failed");
  out.resize(size);
  return out;
}

Image png_decode(const std::string& bytes) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw std::runtime_error("png_decode: not a decodable PNG");

  bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  int channels = gray ? 1 : 3;
  std::vector<uint8_t> rows(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, rows.data(), 0, nullptr)) {
    png_image_free(&img);
    throw std::runtime_error("png_decode: read failed");
  }

  Image out(static_cast<int>(img.height), static_cast<int>(img.width), channels);
  for (int y = 0; y < out.height(); ++y)
    for (int xx = 0; xx < out.width(); ++xx)
      for (int c = 0; c < channels; ++c)
        out.at(c, y, xx) =
            rows[(static_cast<size_t>(y) * out.width() + xx) * channels + c] / 255.0;
  return out;
}

}  // namespace prepatk
