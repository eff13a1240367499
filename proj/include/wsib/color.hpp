#pragma once

#include <span>
#include <vector>

#include "wsib/image.hpp"

namespace wsib {

struct Lab {
  double l = 0.0;
  double a = 0.0;
  double b = 0.0;
};

/// sRGB (D65, 2 degree observer) to CIELAB.
Lab rgb_to_lab(Rgb c) noexcept;

/// Planar CIELAB conversion of a whole image, row-parallel.
std::vector<Lab> to_lab(const Image& image);

/// HSV saturation in [0, 1].
double saturation(Rgb c) noexcept;

/// Rec. 601 luma in intensity units.
double luminance(Rgb c) noexcept;

namespace serial {
std::vector<Lab> to_lab(const Image& image);
}

}  // namespace wsib
