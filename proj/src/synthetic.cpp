#include "wsib/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "wsib/error.hpp"

namespace wsib {
namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(std::uint64_t salt, std::int64_t ix, std::int64_t iy) {
  const std::uint64_t h = splitmix(salt ^ splitmix(static_cast<std::uint64_t>(ix) * 0x632be59bd9b4e019ULL ^
                                                  static_cast<std::uint64_t>(iy)));
  return static_cast<double>(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t salt, double x, double y, double cell) {
  const double fx = x / cell;
  const double fy = y / cell;
  const auto ix = static_cast<std::int64_t>(std::floor(fx));
  const auto iy = static_cast<std::int64_t>(std::floor(fy));
  const double tx = smooth(fx - ix);
  const double ty = smooth(fy - iy);
  const double v00 = lattice(salt, ix, iy);
  const double v10 = lattice(salt, ix + 1, iy);
  const double v01 = lattice(salt, ix, iy + 1);
  const double v11 = lattice(salt, ix + 1, iy + 1);
  return (v00 * (1 - tx) + v10 * tx) * (1 - ty) + (v01 * (1 - tx) + v11 * tx) * ty;
}

struct TextureField {
  std::array<double, 3> od{};
  double gain = 0.0;
  double stripe_frequency = 0.0;
  std::uint64_t salt = 0;

  TextureField(const Texture& t, std::uint64_t salt_in) : stripe_frequency(t.stripe_frequency), salt(salt_in) {
    const std::array<int, 3> base{t.base.r, t.base.g, t.base.b};
    double slope = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double shifted = base[c] + 1.0;
      od[c] = -std::log10(shifted / 256.0);
      slope += shifted * std::log(256.0 / shifted);
    }
    slope /= 3.0;
    gain = slope > 1e-9 ? t.noise_amplitude / slope : 0.0;
  }

  /// Concentration multiplier at (x, y).
  double concentration(int x, int y) const {
    double n = 0.65 * value_noise(salt, x, y, 12.0) + 0.35 * value_noise(salt ^ 0x5bd1e995ULL, x, y, 4.0);
    if (stripe_frequency > 0.0)
      n += 0.5 * std::sin(2.0 * std::numbers::pi * stripe_frequency * (x + y) / std::numbers::sqrt2);
    return std::max(0.0, 1.0 + gain * n);
  }
};

std::vector<Disk> place_blobs(const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Disk> blobs;
  for (int i = 0; i < spec.blob_count; ++i) {
    Disk d;
    d.radius = spec.blob_radius_min + (spec.blob_radius_max - spec.blob_radius_min) * unit(rng);
    d.cx = d.radius + (spec.width - 2.0 * d.radius) * unit(rng);
    d.cy = d.radius + (spec.height - 2.0 * d.radius) * unit(rng);
    blobs.push_back(d);
  }
  return blobs;
}

struct Renderer {
  const SyntheticSpec& spec;
  std::vector<Disk> blobs;
  TextureField tumor;
  TextureField background;

  explicit Renderer(const SyntheticSpec& s)
      : spec(s),
        blobs(place_blobs(s)),
        tumor(s.tumor, splitmix(s.seed ^ 0x7475UL)),
        background(s.background, splitmix(s.seed ^ 0x6267UL)) {}

  void render_row(int y, std::uint8_t* rgb, std::uint8_t* mask) const {
    constexpr double ln10 = std::numbers::ln10;
    for (int x = 0; x < spec.width; ++x) {
      double depth = -std::numeric_limits<double>::infinity();
      bool inside = false;
      for (const auto& b : blobs) {
        const double dx = x + 0.5 - b.cx;
        const double dy = y + 0.5 - b.cy;
        const double d2 = dx * dx + dy * dy;
        inside = inside || d2 <= b.radius * b.radius;
        depth = std::max(depth, b.radius - std::sqrt(d2));
      }
      mask[x] = inside ? 1 : 0;

      double t = inside ? 1.0 : 0.0;
      if (spec.edge_softness > 0.0 && !blobs.empty())
        t = smooth(std::clamp(0.5 + depth / (2.0 * spec.edge_softness), 0.0, 1.0));

      const double ct = t > 0.0 ? tumor.concentration(x, y) * t : 0.0;
      const double cb = t < 1.0 ? background.concentration(x, y) * (1.0 - t) : 0.0;
      for (int c = 0; c < 3; ++c) {
        const double od = ct * tumor.od[c] + cb * background.od[c];
        const double v = 256.0 * std::exp(-ln10 * od) - 1.0;
        rgb[3 * x + c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
};

}  // namespace

void validate(const SyntheticSpec& spec) {
  if (spec.width < 1 || spec.height < 1)
    throw_data(fmt::format("degenerate slide size {}x{}", spec.width, spec.height));
  if (spec.blob_count < 0) throw_data("blob_count must be >= 0");
  if (spec.blob_count > 0) {
    if (!(spec.blob_radius_min > 0.0) || spec.blob_radius_min > spec.blob_radius_max)
      throw_data("blob radius range must satisfy 0 < min <= max");
    const double limit = std::min(spec.width, spec.height) / 2.0;
    if (!(spec.blob_radius_max < limit))
      throw_data(fmt::format("blob_radius_max {} must be < min(width, height)/2 = {}", spec.blob_radius_max, limit));
  }
  if (spec.edge_softness < 0.0) throw_data("edge_softness must be >= 0");
  for (const Texture* t : {&spec.tumor, &spec.background})
    if (t->noise_amplitude < 0.0 || t->stripe_frequency < 0.0)
      throw_data("texture noise amplitude and stripe frequency must be >= 0");
  const double dr = spec.tumor.base.r - spec.background.base.r;
  const double dg = spec.tumor.base.g - spec.background.base.g;
  const double db = spec.tumor.base.b - spec.background.base.b;
  const double distance = std::sqrt(dr * dr + dg * dg + db * db);
  const double amplitude = std::max(spec.tumor.noise_amplitude, spec.background.noise_amplitude);
  if (!(distance > amplitude))
    throw_data(fmt::format("textures not distinguishable: base color distance {:.2f} <= noise amplitude {:.2f}",
                           distance, amplitude));
}

SyntheticSlide generate_synthetic_wsi(const SyntheticSpec& spec) {
  validate(spec);
  const Renderer renderer(spec);
  SyntheticSlide slide{Image(spec.width, spec.height), Mask(spec.width, spec.height), renderer.blobs};
  auto* rgb = slide.image.data().data();
  auto* mask = slide.mask.data().data();
  const std::size_t w = static_cast<std::size_t>(spec.width);
#pragma omp parallel for schedule(dynamic, 16)
  for (int y = 0; y < spec.height; ++y) renderer.render_row(y, rgb + 3 * w * y, mask + w * y);
  return slide;
}

namespace serial {

SyntheticSlide generate_synthetic_wsi(const SyntheticSpec& spec) {
  validate(spec);
  const Renderer renderer(spec);
  SyntheticSlide slide{Image(spec.width, spec.height), Mask(spec.width, spec.height), renderer.blobs};
  const std::size_t w = static_cast<std::size_t>(spec.width);
  for (int y = 0; y < spec.height; ++y)
    renderer.render_row(y, slide.image.data().data() + 3 * w * y, slide.mask.data().data() + w * y);
  return slide;
}

}  // namespace serial
}  // namespace wsib
