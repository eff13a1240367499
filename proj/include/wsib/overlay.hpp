#pragma once

#include "wsib/image.hpp"

namespace wsib {

/// Blends `color` over masked pixels: out = (1 - alpha) * image + alpha * color,
/// rounded half-up. Unmasked pixels are copied.
Image render_overlay(const Image& image, const Mask& mask, Rgb color, double alpha);

}  // namespace wsib
