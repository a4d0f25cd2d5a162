#include "pbgan/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace pbgan {

namespace {

float to_unit(png_byte v) { return static_cast<float>(v) / 255.0f; }
png_byte to_byte(float v) { return static_cast<png_byte>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

}  // namespace

Image read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ImageFormatError("missing file " + path.string());
  png_image desc;
  std::memset(&desc, 0, sizeof desc);
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&desc, path.c_str()))
    throw ImageFormatError(path.string() + ": " + desc.message);
  desc.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(desc));
  png_color background{0, 0, 0};
  if (!png_image_finish_read(&desc, &background, buf.data(), 0, nullptr)) {
    png_image_free(&desc);
    throw ImageFormatError(path.string() + ": " + desc.message);
  }
  const int w = static_cast<int>(desc.width);
  const int h = static_cast<int>(desc.height);
  Image img(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img(c, y, x) = to_unit(buf[(static_cast<std::size_t>(y) * w + x) * 3 + c]);
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels() != 3) throw ImageFormatError("write_png expects 3 channels");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::vector<png_byte> buf(static_cast<std::size_t>(img.width()) * img.height() * 3);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) buf[(static_cast<std::size_t>(y) * img.width() + x) * 3 + c] = to_byte(img(c, y, x));
  png_image desc;
  std::memset(&desc, 0, sizeof desc);
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(img.width());
  desc.height = static_cast<png_uint_32>(img.height());
  desc.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&desc, path.c_str(), 0, buf.data(), 0, nullptr))
    throw ImageFormatError("cannot write " + path.string() + ": " + desc.message);
}

Image quantize_8bit(const Image& img) {
  return Image(img.shape(), img.matrix().unaryExpr([](float v) { return to_unit(to_byte(v)); }));
}

}  // namespace pbgan
