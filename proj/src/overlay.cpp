#include "wsib/overlay.hpp"

#include <algorithm>
#include <cmath>

#include "wsib/error.hpp"

namespace wsib {

Image render_overlay(const Image& image, const Mask& mask, Rgb color, double alpha) {
  require_same_dims(image, mask, "render_overlay");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw_usage("overlay alpha must lie in [0, 1]");
  Image out = image;
  const double tint[3] = {static_cast<double>(color.r), static_cast<double>(color.g), static_cast<double>(color.b)};
  auto dst = out.data();
  const auto m = mask.data();
  const auto n = static_cast<std::ptrdiff_t>(mask.pixel_count());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (!m[i]) continue;
    for (int c = 0; c < 3; ++c) {
      const double v = (1.0 - alpha) * dst[3 * i + c] + alpha * tint[c];
      dst[3 * i + c] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  }
  return out;
}

}  // namespace wsib
