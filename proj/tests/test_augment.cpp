#include <doctest.h>

#include "support.hpp"
#include "wsib/augment.hpp"
#include "wsib/error.hpp"

using namespace wsib;

namespace {

AugmentConfig identity_config() {
  AugmentConfig cfg;
  cfg.quarter_turns = {0};
  cfg.hflip_p = cfg.vflip_p = cfg.elastic_p = 0.0;
  cfg.brightness_delta = 0;
  cfg.elastic_alpha = 0.0;
  return cfg;
}

bool is_binary(const Mask& m) {
  return std::all_of(m.data().begin(), m.data().end(), [](std::uint8_t v) { return v <= 1; });
}

}  // namespace

TEST_SUITE("augment") {
  TEST_CASE("disabled augmentations are the identity") {
    const Image img = test::random_image(37, 23, 1);
    const Mask m = test::random_mask(37, 23, 2);
    for (std::uint64_t i = 0; i < 10; ++i) {
      const auto [a, b] = augment(img, m, identity_config(), i);
      CHECK(a == img);
      CHECK(b == m);
    }
  }

  TEST_CASE("horizontal and vertical flips are involutions") {
    const Image img = test::random_image(31, 17, 3);
    const Mask m = test::random_mask(31, 17, 4);
    CHECK(flip_horizontal(flip_horizontal(img)) == img);
    CHECK(flip_horizontal(flip_horizontal(m)) == m);
    CHECK(flip_vertical(flip_vertical(img)) == img);
    CHECK(flip_vertical(flip_vertical(m)) == m);
    CHECK(flip_horizontal(img) != img);
  }

  TEST_CASE("quarter turn moves the top-right corner to the top-left") {
    Mask m(3, 2);
    m.set(2, 0, 1);
    const Mask r = rotate_quarter(m, 1);
    REQUIRE(r.width() == 2);
    REQUIRE(r.height() == 3);
    CHECK(r.at(0, 0) == 1);
    CHECK(r.count() == 1);
    for (int t = 0; t < 4; ++t) {
      Mask cur = m;
      for (int k = 0; k < 4; ++k) cur = rotate_quarter(cur, 1);
      CHECK(cur == m);
    }
    CHECK(rotate_quarter(m, 2) == flip_vertical(flip_horizontal(m)));
    CHECK(rotate_quarter(m, -1) == rotate_quarter(m, 3));
  }

  TEST_CASE("rotation and flips preserve the positive count") {
    AugmentConfig cfg;
    cfg.elastic_p = 0.0;
    for (std::uint64_t i = 0; i < 40; ++i) {
      const Mask m = test::random_mask(29, 41, i, 0.3);
      const auto [a, b] = augment(test::random_image(29, 41, i), m, cfg, i);
      CHECK(b.count() == m.count());
      CHECK(is_binary(b));
      const auto plan = plan_augment(cfg, i);
      CHECK(b.width() == (plan.quarter_turns % 2 ? 41 : 29));
    }
  }

  TEST_CASE("brightness touches only the image and clamps") {
    Image img(2, 1, Rgb{250, 10, 100});
    img.set(1, 0, {5, 128, 255});
    const Image up = adjust_brightness(img, 10);
    CHECK(up.at(0, 0) == Rgb{255, 20, 110});
    CHECK(up.at(1, 0) == Rgb{15, 138, 255});
    const Image down = adjust_brightness(img, -10);
    CHECK(down.at(1, 0) == Rgb{0, 118, 245});

    AugmentConfig cfg = identity_config();
    cfg.brightness_delta = 20;
    const Mask m = test::random_mask(8, 8, 5);
    for (std::uint64_t i = 0; i < 10; ++i) CHECK(augment(test::random_image(8, 8, 6), m, cfg, i).second == m);
  }

  TEST_CASE("elastic deformation with alpha 0 is the identity") {
    const Image img = test::random_image(40, 30, 7);
    const Mask m = test::random_mask(40, 30, 8);
    const auto [a, b] = elastic_deform(img, m, 0.0, 4.0, 99);
    CHECK(a == img);
    CHECK(b == m);
  }

  TEST_CASE("elastic deformation is deterministic per seed") {
    const Image img = test::random_image(48, 48, 9);
    const Mask m = test::disk_mask(48, 48, 24, 24, 15);
    const auto one = elastic_deform(img, m, 8.0, 4.0, 5);
    const auto two = elastic_deform(img, m, 8.0, 4.0, 5);
    const auto other = elastic_deform(img, m, 8.0, 4.0, 6);
    CHECK(one.first == two.first);
    CHECK(one.second == two.second);
    CHECK(one.first != other.first);
    CHECK(is_binary(one.second));
  }

  TEST_CASE("small elastic deformations change disk area by less than 5%") {
    const Mask disk = test::disk_mask(128, 128, 64, 64, 40);
    const Image img(128, 128, Rgb{200, 100, 150});
    for (double alpha : {0.5, 1.0, 2.0})
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto [a, b] = elastic_deform(img, disk, alpha, 4.0, seed);
        const double change = std::abs(double(b.count()) - double(disk.count())) / double(disk.count());
        CHECK(change < 0.05);
        CHECK(is_binary(b));
      }
  }

  TEST_CASE("augment matches apply_plan and depends only on the sample index") {
    AugmentConfig cfg;
    cfg.brightness_delta = 15;
    cfg.seed = 42;
    const Image img = test::random_image(32, 32, 10);
    const Mask m = test::disk_mask(32, 32, 12, 18, 9);
    std::vector<std::pair<Image, Mask>> forward, backward(8);
    for (std::uint64_t i = 0; i < 8; ++i) forward.push_back(augment(img, m, cfg, i));
    for (int i = 7; i >= 0; --i) backward[i] = augment(img, m, cfg, i);
    for (std::uint64_t i = 0; i < 8; ++i) {
      CHECK(forward[i].first == backward[i].first);
      CHECK(forward[i].second == backward[i].second);
      const auto manual = apply_plan(img, m, cfg, plan_augment(cfg, i));
      CHECK(manual.first == forward[i].first);
    }
    bool varied = false;
    for (std::uint64_t i = 1; i < 8; ++i) varied = varied || !(forward[i].first == forward[0].first);
    CHECK(varied);
  }

  TEST_CASE("dimension mismatch and invalid settings are errors") {
    CHECK_THROWS_AS(augment(test::random_image(8, 8, 1), Mask(8, 9), AugmentConfig{}, 0), Error);
    CHECK_THROWS_AS(elastic_deform(test::random_image(8, 8, 1), Mask(9, 8), 1.0, 1.0, 0), Error);
    AugmentConfig bad;
    bad.hflip_p = 1.5;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = AugmentConfig{};
    bad.elastic_sigma = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
  }
}
