#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "glean/errors.hpp"
#include "glean/imaging.hpp"

namespace glean {

std::uint8_t to_byte(float v) {
  const float b = std::round((v + 1.0f) * 127.5f);
  return static_cast<std::uint8_t>(std::clamp(b, 0.0f, 255.0f));
}

float from_byte(std::uint8_t b) { return static_cast<float>(b) / 127.5f - 1.0f; }

void save_image(const Tensor& img, const std::filesystem::path& path) {
  if (img.rank() != 4 || img.n() != 1 || img.c() != 3) {
    throw ShapeError("save_image expects a 1×3×H×W tensor, got " + shape_str(img.shape()));
  }
  const int h = img.h(), w = img.w();
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(img.at(0, c, y, x));

  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write " + path.string() + ": " + msg);
  }
}

Tensor load_image(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    const std::string msg = image.message;
    png_image_free(&image);
    if (!std::filesystem::exists(path)) throw IoError("cannot read " + path.string() + ": " + msg);
    throw UnsupportedFormat("not a readable PNG: " + path.string() + " (" + msg + ")");
  }
  const bool rgb = (image.format & PNG_FORMAT_FLAG_COLOR) && !(image.format & PNG_FORMAT_FLAG_ALPHA) &&
                   !(image.format & PNG_FORMAT_FLAG_LINEAR);
  if (!rgb) {
    png_image_free(&image);
    throw UnsupportedFormat(path.string() + " is not an 8-bit RGB PNG");
  }
  image.format = PNG_FORMAT_RGB;
  const int w = static_cast<int>(image.width), h = static_cast<int>(image.height);
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot decode " + path.string() + ": " + msg);
  }
  Tensor img({1, 3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = from_byte(pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c]);
  return img;
}

}  // namespace glean
