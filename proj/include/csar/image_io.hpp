#pragma once

#include <filesystem>

#include "csar/image.hpp"

namespace csar {

struct ImageSize {
  int width = 0;
  int height = 0;
};

/// Binary PGM (P5, maxval <= 255) or 8-bit grayscale PNG, chosen by content.
Frame read_image(const std::filesystem::path& path);

/// Dimensions from the file header only.
ImageSize read_image_size(const std::filesystem::path& path);

/// P5, 8-bit, quantized.
void write_pgm(const std::filesystem::path& path, const Frame& frame);

Frame read_pgm(const std::filesystem::path& path);
Frame read_png(const std::filesystem::path& path);

}  // namespace csar
