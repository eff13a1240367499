#pragma once

#include <cstdint>
#include <vector>

#include "wsib/image.hpp"

namespace wsib {

/// Stain-like texture: a base color whose concentration is modulated by
/// seeded value noise plus optional diagonal stripes.
struct Texture {
  Rgb base;
  double noise_amplitude = 12.0;  ///< approximate peak deviation, intensity levels
  double stripe_frequency = 0.0;  ///< cycles per pixel along the diagonal; 0 disables
};

struct SyntheticSpec {
  int width = 1024;
  int height = 1024;
  int blob_count = 3;
  double blob_radius_min = 120.0;
  double blob_radius_max = 200.0;
  Texture tumor{{118, 58, 150}, 14.0, 0.035};
  Texture background{{226, 158, 198}, 10.0, 0.0};
  double edge_softness = 2.0;  ///< width of the rendered texture transition, pixels
  std::uint64_t seed = 1;
};

struct Disk {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;

  /// Pixel (x, y) is sampled at its center.
  bool contains(int x, int y) const noexcept {
    const double dx = x + 0.5 - cx;
    const double dy = y + 0.5 - cy;
    return dx * dx + dy * dy <= radius * radius;
  }
};

struct SyntheticSlide {
  Image image;
  Mask mask;
  std::vector<Disk> blobs;
};

/// Throws a data error describing the first violated invariant.
void validate(const SyntheticSpec& spec);

/// Pure function of `spec`: the mask is the union of the generated disks,
/// tumor texture is rendered inside, background texture outside.
SyntheticSlide generate_synthetic_wsi(const SyntheticSpec& spec);

namespace serial {
SyntheticSlide generate_synthetic_wsi(const SyntheticSpec& spec);
}

}  // namespace wsib
