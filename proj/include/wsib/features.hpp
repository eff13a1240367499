#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wsib/color.hpp"
#include "wsib/image.hpp"

namespace wsib {

/// Per-pixel quantities shared by every region of one image.
struct FeatureContext {
  int width = 0;
  int height = 0;
  std::vector<Lab> lab;
  std::vector<float> gradient;  ///< L-channel central-difference magnitude

  static FeatureContext build(const Image& image);
};

/// A pixel set (linear indices into the context raster) plus its boundary size.
struct Region {
  std::span<const std::uint32_t> pixels;
  std::size_t perimeter = 0;  ///< pixels with a 4-neighbor outside the region or on the image border
};

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::string name() const = 0;
  virtual void extract(const FeatureContext& ctx, const Region& region, std::span<double> out) const = 0;
};

/// Handcrafted 40-dimensional descriptor:
///   [0, 6)   CIELAB mean (L, a, b) then variance (L, a, b)
///   [6, 30)  8-bin histograms of L in [0, 100], a and b in [-80, 80]
///   [30, 38) 8-bin histogram of gradient magnitude in [0, 40)
///   [38, 40) area / image pixels, perimeter / area
/// Out-of-range values land in the edge bins.
class ReferenceExtractor final : public FeatureExtractor {
 public:
  static constexpr std::size_t kDimension = 40;
  static constexpr std::size_t kHistogramOffset = 6;
  static constexpr std::size_t kGradientOffset = 30;
  static constexpr int kBins = 8;

  std::size_t dimension() const override { return kDimension; }
  std::string name() const override { return "reference-40"; }
  void extract(const FeatureContext& ctx, const Region& region, std::span<double> out) const override;
};

/// Features of every pixel of `image` treated as a single region.
std::vector<double> image_features(const Image& image, const FeatureExtractor& extractor);

/// Dense per-pixel descriptor used by the reference semantic model: local
/// (2r+1)^2 window mean and standard deviation of L, a, b (6 values per pixel),
/// windows clipped at the border.
inline constexpr std::size_t kPixelFeatureDimension = 6;
std::vector<double> pixel_features(const Image& image, int radius = 2);

}  // namespace wsib
