#include "wsib/color.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace wsib {
namespace {

constexpr double kWhiteX = 0.95047;
constexpr double kWhiteY = 1.0;
constexpr double kWhiteZ = 1.08883;

double linearize(double c) {
  c /= 255.0;
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

const std::array<double, 256>& linear_table() {
  static const std::array<double, 256> table = [] {
    std::array<double, 256> t{};
    for (int i = 0; i < 256; ++i) t[i] = linearize(i);
    return t;
  }();
  return table;
}

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

Lab linear_to_lab(double r, double g, double b) {
  const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  const double fx = lab_f(x / kWhiteX);
  const double fy = lab_f(y / kWhiteY);
  const double fz = lab_f(z / kWhiteZ);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

}  // namespace

Lab rgb_to_lab(Rgb c) noexcept {
  const auto& lin = linear_table();
  return linear_to_lab(lin[c.r], lin[c.g], lin[c.b]);
}

std::vector<Lab> to_lab(const Image& image) {
  std::vector<Lab> out(image.pixel_count());
  const auto& lin = linear_table();
  const auto data = image.data();
  const int width = image.width();
  const int height = image.height();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      const std::size_t i = row + x;
      out[i] = linear_to_lab(lin[data[3 * i]], lin[data[3 * i + 1]], lin[data[3 * i + 2]]);
    }
  }
  return out;
}

double saturation(Rgb c) noexcept {
  const int mx = std::max({c.r, c.g, c.b});
  const int mn = std::min({c.r, c.g, c.b});
  return mx == 0 ? 0.0 : static_cast<double>(mx - mn) / mx;
}

double luminance(Rgb c) noexcept { return 0.299 * c.r + 0.587 * c.g + 0.114 * c.b; }

namespace serial {

std::vector<Lab> to_lab(const Image& image) {
  std::vector<Lab> out;
  out.reserve(image.pixel_count());
  const auto data = image.data();
  for (std::size_t i = 0; i < image.pixel_count(); ++i)
    out.push_back(linear_to_lab(linearize(data[3 * i]), linearize(data[3 * i + 1]), linearize(data[3 * i + 2])));
  return out;
}

}  // namespace serial
}  // namespace wsib
