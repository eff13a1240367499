#pragma once

#include <filesystem>

#include "wsib/image.hpp"

namespace wsib {

/// Loads an 8-bit RGB (or grayscale, expanded to RGB) PNG.
/// 16-bit and alpha-carrying files are rejected.
Image load_image(const std::filesystem::path& path);
void save_image(const Image& image, const std::filesystem::path& path);

/// Masks live on disk as 8-bit grayscale with {0, 255}; values >= 128 load as 1.
Mask load_mask(const std::filesystem::path& path);
void save_mask(const Mask& mask, const std::filesystem::path& path);

/// Grayscale probability raster, value / 255.
ProbabilityMap load_probability(const std::filesystem::path& path);
void save_probability(const ProbabilityMap& map, const std::filesystem::path& path);

}  // namespace wsib
