#include <doctest.h>

#include <fstream>
#include <map>
#include <queue>
#include <set>

#include "oracles.hpp"
#include "support.hpp"
#include "wsib/color.hpp"
#include "wsib/error.hpp"
#include "wsib/features.hpp"
#include "wsib/parallel.hpp"
#include "wsib/superpixel.hpp"
#include "wsib/synthetic.hpp"

using namespace wsib;

namespace {

// Same partition regardless of id assignment.
bool same_partition(const SuperpixelMap& a, const SuperpixelMap& b) {
  if (a.labels.size() != b.labels.size()) return false;
  std::map<std::uint32_t, std::uint32_t> ab, ba;
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    const auto [it1, new1] = ab.emplace(a.labels[i], b.labels[i]);
    const auto [it2, new2] = ba.emplace(b.labels[i], a.labels[i]);
    if (it1->second != b.labels[i] || it2->second != a.labels[i]) return false;
  }
  return true;
}

SuperpixelMap map_from(int w, int h, std::vector<std::uint32_t> labels) {
  SuperpixelMap m{w, h, 0, std::move(labels)};
  m.count = *std::max_element(m.labels.begin(), m.labels.end()) + 1;
  return m;
}

Image two_tone(int w, int h, int split_y) {
  Image img(w, h, Rgb{200, 60, 60});
  for (int y = split_y; y < h; ++y)
    for (int x = 0; x < w; ++x) img.set(x, y, {40, 60, 210});
  return img;
}

}  // namespace

TEST_SUITE("superpixel") {
  TEST_CASE("constant 64x64 image with k=4 gives 4 connected quarters") {
    const auto m = slic(Image(64, 64, Rgb{120, 130, 140}), {4, 10.0, 10, 0.25});
    REQUIRE(m.count == 4);
    std::vector<std::size_t> sizes(4, 0);
    for (auto l : m.labels) ++sizes[l];
    for (auto s : sizes) CHECK(std::abs(static_cast<double>(s) - 1024.0) <= 0.05 * 1024.0);
    CHECK(test::flood_fill_connected(m));
  }

  TEST_CASE("k_target = 1 gives one superpixel") {
    const auto m = slic(test::random_image(40, 30, 3), {1, 10.0, 10, 0.25});
    CHECK(m.count == 1);
    CHECK(std::all_of(m.labels.begin(), m.labels.end(), [](auto l) { return l == 0; }));
  }

  TEST_CASE("two homogeneous halves with k=2 and small m split exactly at the color boundary") {
    const Image img = two_tone(64, 64, 40);
    const auto m = slic(img, {2, 1.0, 10, 0.25});
    REQUIRE(m.count == 2);
    // boundary recall: every true boundary pixel has a superpixel boundary within 1 px
    bool recall = true;
    for (int x = 0; x < 64; ++x) {
      bool found = false;
      for (int y = 38; y <= 41 && !found; ++y) found = m.at(x, y) != m.at(x, y + 1);
      recall = recall && found;
    }
    CHECK(recall);
    bool exact = true;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) exact = exact && ((m.at(x, y) == m.at(0, 63)) == (y >= 40));
    CHECK(exact);
  }

  TEST_CASE("k_target larger than the pixel count is rejected") {
    CHECK_THROWS_AS(slic(Image(4, 4), {17, 10.0, 10, 0.25}), Error);
    CHECK_THROWS_AS(slic(Image(4, 4), {0, 10.0, 10, 0.25}), Error);
    CHECK_THROWS_AS(slic(Image(4, 4), {2, 0.0, 10, 0.25}), Error);
  }

  TEST_CASE("slic on random images: partition, connectivity, monotone energy") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const int w = 24 + static_cast<int>(seed * 13 % 50), h = 20 + static_cast<int>(seed * 7 % 40);
      const int k = 2 + static_cast<int>(seed * 11 % 40);
      SlicStats stats;
      const auto m = slic(test::random_image(w, h, seed), {k, 10.0, 10, 0.25}, &stats);
      m.validate();
      CHECK(test::flood_fill_connected(m));
      CHECK(m.count >= 1);
      CHECK(m.count <= stats.initial_clusters);
      for (std::size_t i = 1; i < stats.energy.size(); ++i) CHECK(stats.energy[i] <= stats.energy[i - 1] * (1 + 1e-12));
    }
  }

  TEST_CASE("slic on a synthetic slide stops early or runs max_iter with decreasing energy") {
    SyntheticSpec spec;
    spec.width = spec.height = 256;
    spec.blob_radius_min = 30;
    spec.blob_radius_max = 60;
    const auto slide = generate_synthetic_wsi(spec);
    SlicStats stats;
    const auto m = slic(slide.image, {100, 10.0, 10, 0.25}, &stats);
    CHECK(test::flood_fill_connected(m));
    CHECK(stats.iterations >= 1);
    CHECK(stats.iterations <= 10);
    for (std::size_t i = 1; i < stats.energy.size(); ++i) CHECK(stats.energy[i] <= stats.energy[i - 1] * (1 + 1e-12));
  }

  TEST_CASE("parallel Lab conversion matches the serial reference and the per-pixel formula") {
    const Image img = test::random_image(61, 37, 8);
    const auto ref = serial::to_lab(img);
    for (int t : {1, 2, 4}) {
      parallel::ScopedThreads threads(t);
      const auto lab = to_lab(img);
      REQUIRE(lab.size() == ref.size());
      bool same = true;
      for (std::size_t i = 0; i < lab.size(); ++i) {
        const Lab direct = rgb_to_lab(img.at(static_cast<int>(i % 61), static_cast<int>(i / 61)));
        same = same && lab[i].l == ref[i].l && lab[i].a == ref[i].a && lab[i].b == ref[i].b &&
               lab[i].l == direct.l && lab[i].a == direct.a && lab[i].b == direct.b;
      }
      CHECK(same);
    }
  }

  TEST_CASE("parallel slic matches the exhaustive serial reference for any thread count") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      const Image img = test::random_image(70, 50, seed + 30);
      const SlicParams p{25, 10.0, 10, 0.25};
      const auto ref = serial::slic(img, p);
      for (int t : {1, 2, 4}) {
        parallel::ScopedThreads threads(t);
        CHECK(slic(img, p) == ref);
      }
    }
  }

  TEST_CASE("enforce_connectivity leaves connected maps unchanged up to relabeling") {
    const auto m = map_from(4, 2, {3, 3, 1, 1, 3, 3, 1, 1});
    const auto out = enforce_connectivity(m, 0.25);
    CHECK(out.count == 2);
    CHECK(same_partition(m, out));
    CHECK(out.labels[0] == 0);
  }

  TEST_CASE("a one-pixel orphan is absorbed by its neighbor") {
    std::vector<std::uint32_t> labels(25, 0);
    for (int y = 0; y < 5; ++y)
      for (int x = 3; x < 5; ++x) labels[y * 5 + x] = 1;
    labels[2 * 5 + 4] = 0;  // orphan of label 0 inside label 1
    const auto out = enforce_connectivity(map_from(5, 5, labels), 0.0);
    CHECK(out.count == 2);
    CHECK(out.at(4, 2) == out.at(3, 2));
    CHECK(test::flood_fill_connected(out));
  }

  TEST_CASE("random fragmented maps become connected partitions") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 40; ++trial) {
      const int w = 5 + static_cast<int>(rng() % 30), h = 5 + static_cast<int>(rng() % 30);
      const std::uint32_t k = 1 + static_cast<std::uint32_t>(rng() % 8);
      std::vector<std::uint32_t> labels(static_cast<std::size_t>(w) * h);
      for (auto& l : labels) l = static_cast<std::uint32_t>(rng() % k);
      const auto in = map_from(w, h, labels);
      const auto out = enforce_connectivity(in, 0.25);
      out.validate();
      CHECK(test::flood_fill_connected(out));
      CHECK(out.count >= 1);
      CHECK(is_connected(out));
    }
  }

  TEST_CASE("is_connected detects fragmentation") {
    CHECK_FALSE(is_connected(map_from(3, 1, {0, 1, 0})));
    CHECK(is_connected(map_from(3, 1, {0, 0, 1})));
  }

  TEST_CASE("constant-color superpixel has zero variances and one-hot histograms") {
    const Image img(8, 8, Rgb{90, 140, 200});
    const auto m = map_from(8, 8, std::vector<std::uint32_t>(64, 0));
    const auto f = aggregate_features(img, m, ReferenceExtractor{});
    REQUIRE(f.cols == ReferenceExtractor::kDimension);
    const auto row = f.row(0);
    for (int c = 3; c < 6; ++c) CHECK(row[c] == doctest::Approx(0.0).epsilon(1e-12));
    for (int block = 0; block < 4; ++block) {
      int ones = 0, zeros = 0;
      for (int b = 0; b < 8; ++b) {
        const double v = row[6 + block * 8 + b];
        ones += v == 1.0;
        zeros += v == 0.0;
      }
      CHECK(ones == 1);
      CHECK(zeros == 7);
    }
    const Lab lab = rgb_to_lab({90, 140, 200});
    CHECK(row[0] == doctest::Approx(lab.l).epsilon(1e-9));
    CHECK(row[1] == doctest::Approx(lab.a).epsilon(1e-9));
    CHECK(row[2] == doctest::Approx(lab.b).epsilon(1e-9));
    CHECK(row[38] == doctest::Approx(1.0));
  }

  TEST_CASE("histogram blocks sum to 1 and means match a direct oracle") {
    const Image img = test::random_image(40, 30, 9);
    const auto m = slic(img, {12, 10.0, 10, 0.25});
    const auto f = aggregate_features(img, m, ReferenceExtractor{});
    REQUIRE(f.rows == m.count);
    std::vector<double> sum_l(m.count, 0.0), n(m.count, 0.0);
    for (int y = 0; y < 30; ++y)
      for (int x = 0; x < 40; ++x) {
        sum_l[m.at(x, y)] += rgb_to_lab(img.at(x, y)).l;
        n[m.at(x, y)] += 1;
      }
    for (std::size_t i = 0; i < f.rows; ++i) {
      const auto row = f.row(i);
      for (int block = 0; block < 4; ++block) {
        double s = 0.0;
        for (int b = 0; b < 8; ++b) s += row[6 + block * 8 + b];
        CHECK(std::abs(s - 1.0) <= 1e-9);
      }
      CHECK(row[0] == doctest::Approx(sum_l[i] / n[i]).epsilon(1e-9));
      CHECK(row[38] == doctest::Approx(n[i] / 1200.0));
      CHECK(std::all_of(row.begin(), row.end(), [](double v) { return std::isfinite(v); }));
    }
  }

  TEST_CASE("feature rows permute with superpixel ids") {
    const Image img = test::random_image(20, 20, 4);
    const auto m = slic(img, {6, 10.0, 10, 0.25});
    std::vector<std::uint32_t> perm(m.count);
    for (std::uint32_t i = 0; i < m.count; ++i) perm[i] = m.count - 1 - i;
    SuperpixelMap pm = m;
    for (auto& l : pm.labels) l = perm[l];
    const auto a = aggregate_features(img, m, ReferenceExtractor{});
    const auto b = aggregate_features(img, pm, ReferenceExtractor{});
    for (std::uint32_t i = 0; i < m.count; ++i) {
      const auto ra = a.row(i), rb = b.row(perm[i]);
      CHECK(std::equal(ra.begin(), ra.end(), rb.begin()));
    }
  }

  TEST_CASE("paint_labels examples and round trip") {
    const auto split = map_from(4, 2, {0, 0, 1, 1, 0, 0, 1, 1});
    CHECK(paint_labels(split, std::vector<std::uint8_t>{1, 1}).count() == 8);
    const Mask left = paint_labels(split, std::vector<std::uint8_t>{1, 0});
    CHECK(left == Mask(4, 2, std::vector<std::uint8_t>{1, 1, 0, 0, 1, 1, 0, 0}));
    CHECK_THROWS_AS(paint_labels(split, std::vector<std::uint8_t>{1}), Error);

    const auto m = slic(test::random_image(30, 30, 1), {9, 10.0, 10, 0.25});
    std::vector<std::uint8_t> labels(m.count);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = (i * 7 + 3) % 2;
    CHECK(superpixel_ground_truth(m, paint_labels(m, labels)) == labels);
  }

  TEST_CASE("superpixel_ground_truth equals brute-force strict majority") {
    const auto m = slic(test::random_image(50, 40, 2), {20, 10.0, 10, 0.25});
    CHECK(superpixel_ground_truth(m, Mask(50, 40)) == std::vector<std::uint8_t>(m.count, 0));
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Mask gt = test::random_mask(50, 40, seed, 0.5);
      std::vector<std::size_t> on(m.count, 0), all(m.count, 0);
      for (std::size_t i = 0; i < m.labels.size(); ++i) {
        on[m.labels[i]] += gt.data()[i];
        ++all[m.labels[i]];
      }
      std::vector<std::uint8_t> expected(m.count);
      for (std::size_t l = 0; l < m.count; ++l) expected[l] = 2 * on[l] > all[l] ? 1 : 0;
      CHECK(superpixel_ground_truth(m, gt) == expected);
    }
    const auto half = map_from(2, 1, {0, 0});
    CHECK(superpixel_ground_truth(half, Mask(2, 1, std::vector<std::uint8_t>{1, 0}))[0] == 0);
    CHECK_THROWS_AS(superpixel_ground_truth(half, Mask(3, 1)), Error);
  }

  TEST_CASE("superpixel fully inside a blob is labeled tumor") {
    const Mask gt = test::disk_mask(64, 64, 32, 32, 20);
    const auto m = slic(Image(64, 64, Rgb{100, 100, 100}), {16, 10.0, 10, 0.25});
    const auto labels = superpixel_ground_truth(m, gt);
    const auto center = m.at(32, 32);
    bool inside = true;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (m.at(x, y) == center) inside = inside && gt.at(x, y);
    if (inside) CHECK(labels[center] == 1);
  }

  TEST_CASE("WSPX and WSFB round trip with the documented layout") {
    test::TempDir dir;
    const auto m = slic(test::random_image(33, 21, 6), {10, 10.0, 10, 0.25});
    save_superpixel_map(m, dir / "m.wspx");
    CHECK(std::filesystem::file_size(dir / "m.wspx") == 16 + 4 * m.labels.size());
    std::ifstream raw(dir / "m.wspx", std::ios::binary);
    char header[16];
    raw.read(header, 16);
    CHECK(std::string(header, 4) == "WSPX");
    CHECK(static_cast<unsigned char>(header[8]) == 33);
    CHECK(load_superpixel_map(dir / "m.wspx") == m);

    const auto f = aggregate_features(test::random_image(33, 21, 6), m, ReferenceExtractor{});
    save_feature_matrix(f, dir / "f.wsfb");
    CHECK(std::filesystem::file_size(dir / "f.wsfb") == 16 + 4 * f.values.size());
    const auto back = load_feature_matrix(dir / "f.wsfb");
    REQUIRE(back.rows == f.rows);
    REQUIRE(back.cols == f.cols);
    for (std::size_t i = 0; i < f.values.size(); ++i) CHECK(back.values[i] == static_cast<double>(static_cast<float>(f.values[i])));

    std::ofstream(dir / "bad.wspx", std::ios::binary) << "WSPXjunk";
    CHECK_THROWS_AS(load_superpixel_map(dir / "bad.wspx"), Error);
    std::ofstream(dir / "magic.wspx", std::ios::binary) << "NOPE0000000000000000";
    CHECK_THROWS_AS(load_superpixel_map(dir / "magic.wspx"), Error);
  }
}
