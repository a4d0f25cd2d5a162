#pragma once

#include "pbgan/tensor.hpp"

#include <filesystem>
#include <stdexcept>

namespace pbgan {

class ImageFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decodes any PNG to 3-channel [0,1] floats (gray expanded, alpha dropped).
Image read_png(const std::filesystem::path& path);

/// Encodes a 3-channel [0,1] image as 8-bit RGB; values are clamped.
void write_png(const std::filesystem::path& path, const Image& img);

/// Rounds to the nearest 8-bit level, matching what write_png stores.
Image quantize_8bit(const Image& img);

}  // namespace pbgan
