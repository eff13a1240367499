#include "wsib/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wsib {
namespace {

int bin_of(double v, double lo, double hi, int bins) {
  const int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
  return std::clamp(b, 0, bins - 1);
}

}  // namespace

FeatureContext FeatureContext::build(const Image& image) {
  FeatureContext ctx;
  ctx.width = image.width();
  ctx.height = image.height();
  ctx.lab = to_lab(image);
  ctx.gradient.resize(ctx.lab.size());
  const int w = ctx.width;
  const int h = ctx.height;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const int yu = std::max(0, y - 1);
    const int yd = std::min(h - 1, y + 1);
    for (int x = 0; x < w; ++x) {
      const int xl = std::max(0, x - 1);
      const int xr = std::min(w - 1, x + 1);
      const double gx = ctx.lab[static_cast<std::size_t>(y) * w + xr].l - ctx.lab[static_cast<std::size_t>(y) * w + xl].l;
      const double gy = ctx.lab[static_cast<std::size_t>(yd) * w + x].l - ctx.lab[static_cast<std::size_t>(yu) * w + x].l;
      ctx.gradient[static_cast<std::size_t>(y) * w + x] = static_cast<float>(0.5 * std::sqrt(gx * gx + gy * gy));
    }
  }
  return ctx;
}

void ReferenceExtractor::extract(const FeatureContext& ctx, const Region& region, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  const auto n = static_cast<double>(region.pixels.size());
  if (region.pixels.empty()) return;

  double mean[3] = {0, 0, 0};
  for (auto p : region.pixels) {
    mean[0] += ctx.lab[p].l;
    mean[1] += ctx.lab[p].a;
    mean[2] += ctx.lab[p].b;
  }
  for (double& m : mean) m /= n;

  double var[3] = {0, 0, 0};
  const double inc = 1.0 / n;
  for (auto p : region.pixels) {
    const Lab& c = ctx.lab[p];
    const double d[3] = {c.l - mean[0], c.a - mean[1], c.b - mean[2]};
    for (int k = 0; k < 3; ++k) var[k] += d[k] * d[k];
    out[kHistogramOffset + bin_of(c.l, 0.0, 100.0, kBins)] += inc;
    out[kHistogramOffset + kBins + bin_of(c.a, -80.0, 80.0, kBins)] += inc;
    out[kHistogramOffset + 2 * kBins + bin_of(c.b, -80.0, 80.0, kBins)] += inc;
    out[kGradientOffset + bin_of(ctx.gradient[p], 0.0, 40.0, kBins)] += inc;
  }
  for (int k = 0; k < 3; ++k) {
    out[k] = mean[k];
    out[3 + k] = var[k] / n;
  }
  out[38] = n / (static_cast<double>(ctx.width) * ctx.height);
  out[39] = static_cast<double>(region.perimeter) / n;
}

std::vector<double> image_features(const Image& image, const FeatureExtractor& extractor) {
  const auto ctx = FeatureContext::build(image);
  std::vector<std::uint32_t> pixels(image.pixel_count());
  std::iota(pixels.begin(), pixels.end(), 0u);
  const std::size_t w = static_cast<std::size_t>(image.width());
  const std::size_t h = static_cast<std::size_t>(image.height());
  const std::size_t perimeter = (w < 2 || h < 2) ? w * h : 2 * w + 2 * h - 4;
  std::vector<double> out(extractor.dimension());
  extractor.extract(ctx, Region{pixels, perimeter}, out);
  return out;
}

std::vector<double> pixel_features(const Image& image, int radius) {
  const int w = image.width();
  const int h = image.height();
  const auto lab = to_lab(image);
  // Summed-area tables of each channel and its square.
  const std::size_t sw = static_cast<std::size_t>(w) + 1;
  std::vector<double> sat(sw * (h + 1) * 6, 0.0);
  auto at = [&](int x, int y, int k) -> double& { return sat[((static_cast<std::size_t>(y) * sw) + x) * 6 + k]; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Lab& c = lab[static_cast<std::size_t>(y) * w + x];
      const double v[6] = {c.l, c.a, c.b, c.l * c.l, c.a * c.a, c.b * c.b};
      for (int k = 0; k < 6; ++k) at(x + 1, y + 1, k) = v[k] + at(x, y + 1, k) + at(x + 1, y, k) - at(x, y, k);
    }
  std::vector<double> out(static_cast<std::size_t>(w) * h * kPixelFeatureDimension);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - radius);
    const int y1 = std::min(h, y + radius + 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - radius);
      const int x1 = std::min(w, x + radius + 1);
      const double n = static_cast<double>((x1 - x0) * (y1 - y0));
      double* f = out.data() + (static_cast<std::size_t>(y) * w + x) * kPixelFeatureDimension;
      for (int k = 0; k < 3; ++k) {
        const double s = at(x1, y1, k) - at(x0, y1, k) - at(x1, y0, k) + at(x0, y0, k);
        const double s2 = at(x1, y1, k + 3) - at(x0, y1, k + 3) - at(x1, y0, k + 3) + at(x0, y0, k + 3);
        const double mean = s / n;
        f[k] = mean;
        f[3 + k] = std::sqrt(std::max(0.0, s2 / n - mean * mean));
      }
    }
  }
  return out;
}

}  // namespace wsib
