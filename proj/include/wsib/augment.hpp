#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "wsib/image.hpp"

namespace wsib {

struct AugmentConfig {
  std::vector<int> quarter_turns{0, 1, 2, 3};  ///< allowed counter-clockwise 90 degree turns
  double hflip_p = 0.5;
  double vflip_p = 0.5;
  int brightness_delta = 0;  ///< additive delta drawn uniformly from [-d, d]
  double elastic_p = 0.5;
  double elastic_alpha = 8.0;
  double elastic_sigma = 4.0;
  std::uint64_t seed = 0;

  /// Throws a usage error on out-of-range settings.
  void validate() const;
};

/// Random draws for one sample, fixed by (cfg.seed, sample_index).
struct AugmentPlan {
  int quarter_turns = 0;
  bool hflip = false;
  bool vflip = false;
  int brightness = 0;
  bool elastic = false;
  std::uint64_t elastic_seed = 0;
};

AugmentPlan plan_augment(const AugmentConfig& cfg, std::uint64_t sample_index);

/// Geometric transforms act identically on image (bilinear) and mask
/// (nearest); brightness touches the image only. Order: elastic, rotation,
/// flips, brightness.
std::pair<Image, Mask> augment(const Image& image, const Mask& mask, const AugmentConfig& cfg,
                               std::uint64_t sample_index);
std::pair<Image, Mask> apply_plan(const Image& image, const Mask& mask, const AugmentConfig& cfg,
                                  const AugmentPlan& plan);

/// Displacement field alpha * GaussianBlur(U(-1, 1), sigma) per axis, sampled
/// with clamped borders.
std::pair<Image, Mask> elastic_deform(const Image& image, const Mask& mask, double alpha, double sigma,
                                      std::uint64_t seed);

Image rotate_quarter(const Image& image, int turns);
Mask rotate_quarter(const Mask& mask, int turns);
Image flip_horizontal(const Image& image);
Mask flip_horizontal(const Mask& mask);
Image flip_vertical(const Image& image);
Mask flip_vertical(const Mask& mask);
Image adjust_brightness(const Image& image, int delta);

}  // namespace wsib
