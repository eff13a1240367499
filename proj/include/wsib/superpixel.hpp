#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "wsib/features.hpp"
#include "wsib/image.hpp"

namespace wsib {

struct SlicParams {
  int k_target = 400;
  double compactness = 10.0;
  int max_iter = 10;
  double connectivity_min_frac = 0.25;
};

/// Per-pixel superpixel ids forming a dense partition 0..count-1.
struct SuperpixelMap {
  int width = 0;
  int height = 0;
  std::uint32_t count = 0;
  std::vector<std::uint32_t> labels;

  std::uint32_t at(int x, int y) const noexcept { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t pixel_count() const noexcept { return labels.size(); }

  /// Throws a data error unless every id in [0, count) occurs and no id exceeds it.
  void validate() const;

  bool operator==(const SuperpixelMap&) const = default;
};

struct SlicStats {
  std::size_t initial_clusters = 0;
  std::vector<double> energy;  ///< sum of squared assignment distances after each assignment pass
  int iterations = 0;
};

/// Simple Linear Iterative Clustering over CIELAB + xy followed by
/// connectivity enforcement. Deterministic and independent of thread count.
SuperpixelMap slic(const Image& image, const SlicParams& params, SlicStats* stats = nullptr);

/// Merges every non-dominant fragment of a label, and every component smaller
/// than min_frac * (pixels / count), into its largest adjacent neighbor, then
/// relabels densely in raster order of first occurrence.
SuperpixelMap enforce_connectivity(const SuperpixelMap& map, double min_frac);

/// Whether every id's pixel set is 4-connected.
bool is_connected(const SuperpixelMap& map);

struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  ///< row-major

  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }

  bool operator==(const FeatureMatrix&) const = default;
};

FeatureMatrix aggregate_features(const Image& image, const SuperpixelMap& map, const FeatureExtractor& extractor);

Mask paint_labels(const SuperpixelMap& map, std::span<const std::uint8_t> labels);

/// label i = 1 iff strictly more than half of superpixel i is tumor in `gt`.
std::vector<std::uint8_t> superpixel_ground_truth(const SuperpixelMap& map, const Mask& gt);

/// Binary formats: "WSPX" v1 label raster and "WSFB" v1 float32 feature matrix.
void save_superpixel_map(const SuperpixelMap& map, const std::filesystem::path& path);
SuperpixelMap load_superpixel_map(const std::filesystem::path& path);
void save_feature_matrix(const FeatureMatrix& features, const std::filesystem::path& path);
FeatureMatrix load_feature_matrix(const std::filesystem::path& path);

namespace serial {
/// Exhaustive-candidate SLIC: every cluster's window is tested for every pixel.
SuperpixelMap slic(const Image& image, const SlicParams& params, SlicStats* stats = nullptr);
}

}  // namespace wsib
