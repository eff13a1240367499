#include <doctest.h>

#include <sstream>

#include "support.hpp"
#include "wsib/error.hpp"
#include "wsib/parallel.hpp"
#include "wsib/tiling.hpp"

using namespace wsib;

namespace {

Image block_mean_oracle(const Image& img, int f) {
  const int ow = (img.width() + f - 1) / f, oh = (img.height() + f - 1) / f;
  Image out(ow, oh);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      long sum[3] = {0, 0, 0};
      long n = 0;
      for (int y = oy * f; y < std::min(img.height(), (oy + 1) * f); ++y)
        for (int x = ox * f; x < std::min(img.width(), (ox + 1) * f); ++x) {
          const auto p = img.at(x, y);
          sum[0] += p.r;
          sum[1] += p.g;
          sum[2] += p.b;
          ++n;
        }
      // half-up rounding of sum / n
      out.set(ox, oy, {static_cast<std::uint8_t>((2 * sum[0] + n) / (2 * n)),
                       static_cast<std::uint8_t>((2 * sum[1] + n) / (2 * n)),
                       static_cast<std::uint8_t>((2 * sum[2] + n) / (2 * n))});
    }
  return out;
}

std::vector<int> coverage(const PatchGrid& g) {
  std::vector<int> cover(static_cast<std::size_t>(g.image_width) * g.image_height, 0);
  for (const auto& o : g.origins)
    for (int y = o.y; y < o.y + g.patch_size; ++y)
      for (int x = o.x; x < o.x + g.patch_size; ++x) ++cover[static_cast<std::size_t>(y) * g.image_width + x];
  return cover;
}

ProbabilityMap random_map(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ProbabilityMap m(w, h);
  for (auto& v : m.data()) v = u(rng);
  return m;
}

}  // namespace

TEST_SUITE("tiling") {
  TEST_CASE("downsample factor 1 is the identity") {
    const Image img = test::random_image(13, 7, 1);
    CHECK(downsample(img, 1) == img);
  }

  TEST_CASE("downsample 4096x4096 by 16 gives 256x256") {
    const Image img(4096, 4096, Rgb{9, 8, 7});
    const Image d = downsample(img, 16);
    CHECK(d.width() == 256);
    CHECK(d.height() == 256);
    CHECK(d == Image(256, 256, Rgb{9, 8, 7}));
  }

  TEST_CASE("downsample of a constant image is constant for any factor") {
    for (int f : {2, 3, 5, 16}) CHECK(downsample(Image(37, 21, Rgb{200, 1, 77}), f) == Image((37 + f - 1) / f, (21 + f - 1) / f, Rgb{200, 1, 77}));
  }

  TEST_CASE("downsample equals a brute-force block mean with clamped edges") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      const Image img = test::random_image(29 + static_cast<int>(seed), 19, seed);
      for (int f : {2, 3, 4, 7}) CHECK(downsample(img, f) == block_mean_oracle(img, f));
    }
  }

  TEST_CASE("downsample rejects factor below 1") { CHECK_THROWS_AS(downsample(Image(4, 4), 0), Error); }

  TEST_CASE("nested downsampling dimensions compose") {
    const Image img(96, 48);
    const auto a = downsample(downsample(img, 4), 3);
    const auto b = downsample(img, 12);
    CHECK(a.width() == b.width());
    CHECK(a.height() == b.height());
  }

  TEST_CASE("parallel downsample matches serial for any thread count") {
    const Image img = test::random_image(301, 203, 5);
    const Image ref = serial::downsample(img, 16);
    for (int t : {1, 2, 3}) {
      parallel::ScopedThreads threads(t);
      CHECK(downsample(img, 16) == ref);
    }
  }

  TEST_CASE("make_grid exact division") {
    const auto g = make_grid(512, 512, 256, 256);
    CHECK(g.origins == std::vector<Origin>{{0, 0}, {256, 0}, {0, 256}, {256, 256}});
  }

  TEST_CASE("make_grid shifts the last window to the border") {
    const auto g = make_grid(500, 500, 256, 256);
    CHECK(g.origins == std::vector<Origin>{{0, 0}, {244, 0}, {0, 244}, {244, 244}});
    const auto cover = coverage(g);
    CHECK(std::all_of(cover.begin(), cover.end(), [](int c) { return c >= 1; }));
  }

  TEST_CASE("make_grid single window") { CHECK(make_grid(256, 256, 256, 256).origins == std::vector<Origin>{{0, 0}}); }

  TEST_CASE("make_grid argument errors") {
    CHECK_THROWS_AS(make_grid(100, 300, 256, 256), Error);
    CHECK_THROWS_AS(make_grid(300, 300, 256, 0), Error);
    CHECK_THROWS_AS(make_grid(300, 300, 256, 300), Error);
  }

  TEST_CASE("random grids cover every pixel, stay inside and are row-major") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 200; ++trial) {
      const int w = 1 + static_cast<int>(rng() % 90), h = 1 + static_cast<int>(rng() % 90);
      const int size = 1 + static_cast<int>(rng() % std::min(w, h));
      const int stride = 1 + static_cast<int>(rng() % size);
      const auto g = make_grid(w, h, size, stride);
      const auto cover = coverage(g);
      CHECK(std::all_of(cover.begin(), cover.end(), [](int c) { return c >= 1; }));
      bool ok = true;
      for (std::size_t i = 0; i < g.origins.size(); ++i) {
        const auto o = g.origins[i];
        ok = ok && o.x >= 0 && o.y >= 0 && o.x + size <= w && o.y + size <= h;
        if (i > 0) {
          const auto p = g.origins[i - 1];
          ok = ok && (p.y < o.y || (p.y == o.y && p.x < o.x));
        }
      }
      CHECK(ok);
    }
  }

  TEST_CASE("extract_patches on 2x2 with unit windows is row-major pixels") {
    const Image img = test::random_image(2, 2, 8);
    const auto patches = extract_patches(img, make_grid(2, 2, 1, 1));
    REQUIRE(patches.size() == 4);
    CHECK(patches[0].at(0, 0) == img.at(0, 0));
    CHECK(patches[1].at(0, 0) == img.at(1, 0));
    CHECK(patches[2].at(0, 0) == img.at(0, 1));
    CHECK(patches[3].at(0, 0) == img.at(1, 1));
  }

  TEST_CASE("full-image window returns the image") {
    const Image img = test::random_image(31, 31, 2);
    CHECK(extract_patches(img, make_grid(31, 31, 31, 31)).front() == img);
  }

  TEST_CASE("extract_patches rejects a grid built for other dimensions") {
    CHECK_THROWS_AS(extract_patches(Image(40, 40), make_grid(32, 32, 16, 16)), Error);
  }

  TEST_CASE("re-pasting non-overlapping patches reproduces the image") {
    const Image img = test::random_image(48, 32, 3);
    const auto g = make_grid(48, 32, 16, 16);
    const auto patches = extract_patches(img, g);
    Image rebuilt(48, 32);
    for (std::size_t i = 0; i < g.size(); ++i)
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) rebuilt.set(g.origins[i].x + x, g.origins[i].y + y, patches[i].at(x, y));
    CHECK(rebuilt == img);
  }

  TEST_CASE("stitch_patch_labels block-diagonal") {
    const auto g = make_grid(512, 512, 256, 256);
    const std::vector<std::uint8_t> labels{1, 0, 0, 1};
    const Mask m = stitch_patch_labels(g, labels);
    CHECK(m.at(10, 10) == 1);
    CHECK(m.at(300, 10) == 0);
    CHECK(m.at(10, 300) == 0);
    CHECK(m.at(511, 511) == 1);
    CHECK(m.count() == 2u * 256 * 256);
    CHECK(stitch_patch_labels(g, std::vector<std::uint8_t>(4, 0)).count() == 0);
  }

  TEST_CASE("stitch_patch_labels length mismatch") {
    CHECK_THROWS_AS(stitch_patch_labels(make_grid(8, 8, 4, 4), std::vector<std::uint8_t>(3)), Error);
  }

  TEST_CASE("overlapping label stitching equals a brute-force covering vote") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
      const int w = 20 + static_cast<int>(rng() % 40), h = 20 + static_cast<int>(rng() % 40);
      const int size = 4 + static_cast<int>(rng() % 12);
      const int stride = 1 + static_cast<int>(rng() % size);
      const auto g = make_grid(w, h, size, stride);
      std::vector<std::uint8_t> labels(g.size());
      for (auto& l : labels) l = rng() & 1;
      Mask oracle(w, h);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          int ones = 0, total = 0;
          for (std::size_t i = 0; i < g.size(); ++i) {
            const auto o = g.origins[i];
            if (x >= o.x && x < o.x + size && y >= o.y && y < o.y + size) {
              ++total;
              ones += labels[i];
            }
          }
          oracle.set(x, y, 2 * ones >= total ? 1 : 0);
        }
      CHECK(stitch_patch_labels(g, labels) == oracle);
      CHECK(serial::stitch_patch_labels(g, labels) == oracle);
    }
  }

  TEST_CASE("stitch_dense non-overlapping mosaic") {
    const auto g = make_grid(8, 4, 4, 4);
    std::vector<ProbabilityMap> maps{ProbabilityMap(4, 4, 0.25), ProbabilityMap(4, 4, 0.75)};
    const auto out = stitch_dense(g, maps);
    CHECK(out.at(0, 0) == 0.25);
    CHECK(out.at(7, 3) == 0.75);
  }

  TEST_CASE("stitch_dense averages overlapping windows") {
    const auto g = make_grid(300, 256, 256, 44);
    REQUIRE(g.size() == 2);
    std::vector<ProbabilityMap> maps{ProbabilityMap(256, 256, 0.2), ProbabilityMap(256, 256, 0.6)};
    const auto out = stitch_dense(g, maps);
    CHECK(out.at(100, 100) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(out.at(10, 10) == doctest::Approx(0.2));
    CHECK(out.at(299, 10) == doctest::Approx(0.6));
  }

  TEST_CASE("stitch_dense equals brute-force accumulate/normalize") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      const int w = 16 + static_cast<int>(rng() % 30), h = 16 + static_cast<int>(rng() % 30);
      const int size = 5 + static_cast<int>(rng() % 10);
      const int stride = 1 + static_cast<int>(rng() % size);
      const auto g = make_grid(w, h, size, stride);
      std::vector<ProbabilityMap> maps;
      for (std::size_t i = 0; i < g.size(); ++i) maps.push_back(random_map(size, size, rng()));
      std::vector<double> acc(static_cast<std::size_t>(w) * h, 0.0), cnt(acc.size(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i)
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x) {
            const auto idx = static_cast<std::size_t>(g.origins[i].y + y) * w + g.origins[i].x + x;
            acc[idx] += maps[i].at(x, y);
            cnt[idx] += 1.0;
          }
      const auto out = stitch_dense(g, maps);
      double max_err = 0.0;
      bool in_range = true;
      for (std::size_t k = 0; k < acc.size(); ++k) {
        max_err = std::max(max_err, std::abs(out.data()[k] - acc[k] / cnt[k]));
        in_range = in_range && out.data()[k] >= 0.0 && out.data()[k] <= 1.0;
      }
      CHECK(max_err <= 1e-12);
      CHECK(in_range);
      CHECK(serial::stitch_dense(g, maps) == out);
    }
  }

  TEST_CASE("stitch_dense rejects wrongly sized patch maps") {
    const auto g = make_grid(8, 8, 4, 4);
    std::vector<ProbabilityMap> maps(4, ProbabilityMap(3, 4));
    CHECK_THROWS_AS(stitch_dense(g, maps), Error);
  }

  TEST_CASE("threshold") {
    const ProbabilityMap m(2, 1, std::vector<double>{0.3, 0.7});
    CHECK(threshold(m, 0.5) == Mask(2, 1, std::vector<std::uint8_t>{0, 1}));
    CHECK(threshold(m, 0.0).count() == 2);
    CHECK(threshold(m, std::nextafter(0.7, 1.0)).count() == 0);
  }

  TEST_CASE("tissue filter separates white glass from stained tissue") {
    CHECK_FALSE(is_tissue(Image(16, 16, Rgb{245, 245, 245})));
    CHECK(is_tissue(Image(16, 16, Rgb{226, 158, 198})));
    CHECK(mean_saturation(Image(4, 4, Rgb{200, 100, 100})) == doctest::Approx(0.5));
  }

  TEST_CASE("nearest upsampling and fractional downsampling of masks") {
    Mask m(2, 2, std::vector<std::uint8_t>{1, 0, 0, 1});
    const Mask up = upsample_nearest(m, 4, 4);
    CHECK(up.at(0, 0) == 1);
    CHECK(up.at(1, 1) == 1);
    CHECK(up.at(2, 1) == 0);
    CHECK(up.at(3, 3) == 1);
    const auto frac = downsample_fraction(up, 2);
    CHECK(frac.at(0, 0) == 1.0);
    CHECK(frac.at(1, 0) == 0.0);
    CHECK(downsample_fraction(Mask(3, 3, std::vector<std::uint8_t>{1, 1, 1, 0, 0, 0, 0, 0, 0}), 3).at(0, 0) ==
          doctest::Approx(1.0 / 3.0));
  }

  TEST_CASE("resize keeps constant images constant") {
    CHECK(resize(Image(256, 256, Rgb{5, 6, 7}), 448, 448) == Image(448, 448, Rgb{5, 6, 7}));
    CHECK(resize(Image(1000, 1000, Rgb{5, 6, 7}), 448, 448) == Image(448, 448, Rgb{5, 6, 7}));
  }

  TEST_CASE("grid manifest round-trips and is validated") {
    const auto g = make_grid(500, 300, 256, 200);
    std::stringstream ss;
    write_grid_manifest(g, ss);
    CHECK(ss.str().rfind("WSGRID 500 300 256 200", 0) == 0);
    CHECK(read_grid_manifest(ss) == g);
    std::stringstream bad("WSGRID 500 300 256 200 4\n0 0\n1 0\n0 44\n244 44\n");
    CHECK_THROWS_AS(read_grid_manifest(bad), Error);
    test::TempDir dir;
    save_grid_manifest(g, dir / "grid.txt");
    CHECK(load_grid_manifest(dir / "grid.txt") == g);
  }
}
