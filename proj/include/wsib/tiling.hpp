#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "wsib/image.hpp"

namespace wsib {

/// Block-mean downsampling: output dims are ceil(dims / factor), each output
/// pixel is the rounded mean of its (edge-clipped) factor x factor block.
Image downsample(const Image& image, int factor);

/// Fraction of tumor pixels per factor x factor block.
ProbabilityMap downsample_fraction(const Mask& mask, int factor);

/// Nearest-neighbor resampling: out(x, y) = in(x * w_in / w_out, y * h_in / h_out).
Mask upsample_nearest(const Mask& mask, int width, int height);

/// Area-then-bilinear resampling for color images.
Image resize(const Image& image, int width, int height);

struct Origin {
  int x = 0;
  int y = 0;

  bool operator==(const Origin&) const = default;
};

/// Square windows on a regular grid. The last column/row is shifted so that
/// windows end exactly on the image border; no padding is ever introduced.
struct PatchGrid {
  int image_width = 0;
  int image_height = 0;
  int patch_size = 0;
  int stride = 0;
  std::vector<int> xs;  ///< distinct column origins, ascending
  std::vector<int> ys;  ///< distinct row origins, ascending
  std::vector<Origin> origins;  ///< row-major product of ys x xs

  std::size_t size() const noexcept { return origins.size(); }
  bool operator==(const PatchGrid&) const = default;
};

PatchGrid make_grid(int width, int height, int patch_size, int stride);

std::vector<Image> extract_patches(const Image& image, const PatchGrid& grid);
Image crop(const Image& image, int x, int y, int width, int height);
Mask crop(const Mask& mask, int x, int y, int width, int height);

/// Paints each window with its label. Pixels covered by several windows take
/// the majority of their covering labels; ties go to 1.
Mask stitch_patch_labels(const PatchGrid& grid, std::span<const std::uint8_t> labels);

/// Per-pixel mean of all covering patch predictions.
ProbabilityMap stitch_dense(const PatchGrid& grid, std::span<const ProbabilityMap> patches);

/// mask = 1 where value >= t.
Mask threshold(const ProbabilityMap& map, double t);

/// Mean HSV saturation of an image region.
double mean_saturation(const Image& image);

/// A patch counts as tissue when its mean saturation reaches `min_saturation`.
bool is_tissue(const Image& patch, double min_saturation = 0.05);

/// Text manifest: header `WSGRID <width> <height> <patch_size> <stride> <count>`
/// followed by one `x y` origin per line.
void write_grid_manifest(const PatchGrid& grid, std::ostream& out);
PatchGrid read_grid_manifest(std::istream& in);
void save_grid_manifest(const PatchGrid& grid, const std::filesystem::path& path);
PatchGrid load_grid_manifest(const std::filesystem::path& path);

/// Straightforward single-threaded versions of the parallel kernels, kept as
/// references for equivalence tests and the benchmark.
namespace serial {
Image downsample(const Image& image, int factor);
Mask stitch_patch_labels(const PatchGrid& grid, std::span<const std::uint8_t> labels);
ProbabilityMap stitch_dense(const PatchGrid& grid, std::span<const ProbabilityMap> patches);
}  // namespace serial

}  // namespace wsib
