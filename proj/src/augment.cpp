#include "wsib/augment.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "wsib/error.hpp"

namespace wsib {
namespace {

std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

// Maps output coordinates to source coordinates for a counter-clockwise turn.
template <typename Raster>
Raster rotate_impl(const Raster& src, int turns) {
  turns = ((turns % 4) + 4) % 4;
  if (turns == 0) return src;
  const int w = src.width(), h = src.height();
  const bool swap = turns % 2 == 1;
  Raster out(swap ? h : w, swap ? w : h);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      int sx = x, sy = y;
      switch (turns) {
        case 1: sx = w - 1 - y; sy = x; break;
        case 2: sx = w - 1 - x; sy = h - 1 - y; break;
        case 3: sx = y; sy = h - 1 - x; break;
      }
      out.set(x, y, src.at(sx, sy));
    }
  return out;
}

template <typename Raster>
Raster flip_impl(const Raster& src, bool horizontal) {
  Raster out(src.width(), src.height());
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x)
      out.set(x, y, horizontal ? src.at(src.width() - 1 - x, y) : src.at(x, src.height() - 1 - y));
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  return k;
}

std::vector<double> blur(const std::vector<double>& field, int w, int h, const std::vector<double>& kernel) {
  const int r = static_cast<int>(kernel.size() / 2);
  std::vector<double> tmp(field.size()), out(field.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i) s += kernel[i + r] * field[static_cast<std::size_t>(y) * w + std::clamp(x + i, 0, w - 1)];
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i) s += kernel[i + r] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = s;
    }
  return out;
}

}  // namespace

void AugmentConfig::validate() const {
  for (double p : {hflip_p, vflip_p, elastic_p})
    if (!(p >= 0.0 && p <= 1.0)) throw_usage(fmt::format("augment probability {} outside [0, 1]", p));
  if (quarter_turns.empty()) throw_usage("augment rotation set must not be empty");
  if (!(elastic_sigma > 0.0)) throw_usage("elastic_sigma must be > 0");
  if (elastic_alpha < 0.0) throw_usage("elastic_alpha must be >= 0");
  if (brightness_delta < 0 || brightness_delta > 128) throw_usage("brightness_delta must lie in [0, 128]");
}

AugmentPlan plan_augment(const AugmentConfig& cfg, std::uint64_t sample_index) {
  auto rng = sample_rng(cfg.seed, sample_index);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentPlan plan;
  plan.quarter_turns = cfg.quarter_turns[std::uniform_int_distribution<std::size_t>(0, cfg.quarter_turns.size() - 1)(rng)];
  plan.hflip = unit(rng) < cfg.hflip_p;
  plan.vflip = unit(rng) < cfg.vflip_p;
  plan.brightness = std::uniform_int_distribution<int>(-cfg.brightness_delta, cfg.brightness_delta)(rng);
  plan.elastic = cfg.elastic_alpha > 0.0 && unit(rng) < cfg.elastic_p;
  plan.elastic_seed = rng();
  return plan;
}

std::pair<Image, Mask> apply_plan(const Image& image, const Mask& mask, const AugmentConfig& cfg,
                                  const AugmentPlan& plan) {
  require_same_dims(image, mask, "augment");
  Image img = image;
  Mask m = mask;
  if (plan.elastic) std::tie(img, m) = elastic_deform(img, m, cfg.elastic_alpha, cfg.elastic_sigma, plan.elastic_seed);
  img = rotate_quarter(img, plan.quarter_turns);
  m = rotate_quarter(m, plan.quarter_turns);
  if (plan.hflip) {
    img = flip_horizontal(img);
    m = flip_horizontal(m);
  }
  if (plan.vflip) {
    img = flip_vertical(img);
    m = flip_vertical(m);
  }
  if (plan.brightness != 0) img = adjust_brightness(img, plan.brightness);
  return {std::move(img), std::move(m)};
}

std::pair<Image, Mask> augment(const Image& image, const Mask& mask, const AugmentConfig& cfg,
                               std::uint64_t sample_index) {
  cfg.validate();
  require_same_dims(image, mask, "augment");
  return apply_plan(image, mask, cfg, plan_augment(cfg, sample_index));
}

std::pair<Image, Mask> elastic_deform(const Image& image, const Mask& mask, double alpha, double sigma,
                                      std::uint64_t seed) {
  require_same_dims(image, mask, "elastic_deform");
  if (!(sigma > 0.0)) throw_usage("elastic sigma must be > 0");
  if (alpha == 0.0) return {image, mask};
  const int w = image.width(), h = image.height();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  std::vector<double> fx(image.pixel_count()), fy(image.pixel_count());
  for (auto& v : fx) v = noise(rng);
  for (auto& v : fy) v = noise(rng);
  const auto kernel = gaussian_kernel(sigma);
  const auto dx = blur(fx, w, h, kernel);
  const auto dy = blur(fy, w, h, kernel);

  Image out_img(w, h);
  Mask out_mask(w, h);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      const double sx = std::clamp(x + alpha * dx[p], 0.0, w - 1.0);
      const double sy = std::clamp(y + alpha * dy[p], 0.0, h - 1.0);
      const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double tx = sx - x0, ty = sy - y0;
      auto* d = out_img.pixel_ptr(x, y);
      for (int c = 0; c < 3; ++c) {
        const double top = image.pixel_ptr(x0, y0)[c] * (1 - tx) + image.pixel_ptr(x1, y0)[c] * tx;
        const double bottom = image.pixel_ptr(x0, y1)[c] * (1 - tx) + image.pixel_ptr(x1, y1)[c] * tx;
        d[c] = static_cast<std::uint8_t>(std::clamp(std::lround(top * (1 - ty) + bottom * ty), 0L, 255L));
      }
      out_mask.set(x, y, mask.at(static_cast<int>(std::lround(sx)), static_cast<int>(std::lround(sy))));
    }
  return {std::move(out_img), std::move(out_mask)};
}

Image rotate_quarter(const Image& image, int turns) { return rotate_impl(image, turns); }
Mask rotate_quarter(const Mask& mask, int turns) { return rotate_impl(mask, turns); }
Image flip_horizontal(const Image& image) { return flip_impl(image, true); }
Mask flip_horizontal(const Mask& mask) { return flip_impl(mask, true); }
Image flip_vertical(const Image& image) { return flip_impl(image, false); }
Mask flip_vertical(const Mask& mask) { return flip_impl(mask, false); }

Image adjust_brightness(const Image& image, int delta) {
  Image out = image;
  for (auto& v : out.data()) v = static_cast<std::uint8_t>(std::clamp(static_cast<int>(v) + delta, 0, 255));
  return out;
}

}  // namespace wsib
