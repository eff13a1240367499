#include <doctest.h>

#include "oracles.hpp"
#include "support.hpp"
#include "wsib/error.hpp"
#include "wsib/parallel.hpp"
#include "wsib/pipelines.hpp"
#include "wsib/synthetic.hpp"

using namespace wsib;

namespace {

const SyntheticSlide& slide() {
  static const SyntheticSlide s = [] {
    SyntheticSpec spec;
    spec.width = spec.height = 1024;
    spec.blob_count = 3;
    spec.blob_radius_min = 150;
    spec.blob_radius_max = 250;
    spec.seed = 17;
    return generate_synthetic_wsi(spec);
  }();
  return s;
}

PipelineConfig small_config(Strategy s) {
  PipelineConfig cfg = PipelineConfig::defaults(s);
  cfg.resolution_factor = s == Strategy::patch ? 1 : 4;
  if (s == Strategy::patch) cfg.patch_size = cfg.stride = 32;
  if (s == Strategy::semantic) {
    cfg.patch_size = 64;
    cfg.stride = 56;
  }
  if (s == Strategy::prompt) cfg.resolution_factor = 2;
  return cfg;
}

Mask block_majority(const Mask& m, int size) {
  Mask out(m.width(), m.height());
  for (int by = 0; by < m.height(); by += size)
    for (int bx = 0; bx < m.width(); bx += size) {
      int on = 0;
      for (int y = by; y < by + size; ++y)
        for (int x = bx; x < bx + size; ++x) on += m.at(x, y);
      for (int y = by; y < by + size; ++y)
        for (int x = bx; x < bx + size; ++x) out.set(x, y, 2 * on >= size * size);
    }
  return out;
}

class Failing final : public Backend {
 public:
  explicit Failing(std::size_t bad) : bad_(bad) {
    d_.kind = BackendKind::external;
    d_.input_kind = InputKind::image_patch;
  }
  const BackendDescriptor& descriptor() const override { return d_; }
  double predict(const Image&, const ItemRef& item) const override {
    if (item.index >= bad_) throw_backend("boom");
    return 0.0;
  }

 private:
  std::size_t bad_;
  BackendDescriptor d_;
};

class ConstantPatch final : public Backend {
 public:
  explicit ConstantPatch(double p) : p_(p) {
    d_.kind = BackendKind::external;
    d_.input_kind = InputKind::feature_vector;
  }
  const BackendDescriptor& descriptor() const override { return d_; }
  double predict(std::span<const double>, const ItemRef&) const override { return p_; }

 private:
  double p_;
  BackendDescriptor d_;
};

}  // namespace

TEST_SUITE("pipelines") {
  TEST_CASE("constant background yields an empty mask and no classified patches") {
    const Image blank(512, 384, Rgb{245, 245, 245});
    const auto r = run_patch_pipeline(blank, ConstantPatch(1.0), small_config(Strategy::patch));
    CHECK(r.mask.count() == 0);
    CHECK(r.predicted_items == 0);
    CHECK(r.mask.width() == 512);
    CHECK(r.mask.height() == 384);
  }

  TEST_CASE("patch oracle reproduces the blockwise majority") {
    const auto& s = slide();
    const auto cfg = small_config(Strategy::patch);
    const auto r = run_patch_pipeline(s.image, test::PatchOracle(s.mask), cfg);
    CHECK(r.mask == block_majority(s.mask, 32));
    CHECK(test::dice(r.mask, s.mask) >= 0.9);
    REQUIRE(r.grid);
    CHECK(r.grid->size() == 32 * 32);
  }

  TEST_CASE("superpixel oracle is boundary limited") {
    const auto& s = slide();
    const auto cfg = small_config(Strategy::superpixel);
    const auto labels = test::superpixel_oracle_labels(s.image, s.mask, cfg.resolution_factor, cfg.slic);
    const auto r = run_superpixel_pipeline(s.image, test::SuperpixelOracle(labels), cfg);
    CHECK(test::dice(r.mask, s.mask) >= 0.95);
    REQUIRE(r.superpixels);
    CHECK(r.predicted_items == r.superpixels->count);
  }

  TEST_CASE("dense oracle passes through stitching and thresholding") {
    const auto& s = slide();
    const auto cfg = small_config(Strategy::semantic);
    const auto r =
        run_semantic_pipeline(s.image, test::DenseOracle(downsample_fraction(s.mask, cfg.resolution_factor)), cfg);
    CHECK(test::dice(r.mask, s.mask) >= 0.98);
  }

  TEST_CASE("self-prompting recovers the prompt mask") {
    const auto& s = slide();
    const auto r = run_prompt_pipeline(s.image, s.image, s.mask, NnTransferBackend{}, small_config(Strategy::prompt));
    CHECK(test::dice(r.mask, s.mask) >= 0.95);
  }

  TEST_CASE("a single superpixel gives a uniform mask") {
    auto cfg = small_config(Strategy::superpixel);
    cfg.slic.k_target = 1;
    for (double p : {0.2, 0.8}) {
      const auto r = run_superpixel_pipeline(slide().image, ConstantPatch(p), cfg);
      CHECK(r.superpixels->count == 1);
      CHECK(r.mask.count() == (p >= 0.5 ? r.mask.pixel_count() : 0));
    }
    const auto labels = test::superpixel_oracle_labels(slide().image, slide().mask, 4, cfg.slic);
    const auto r = run_superpixel_pipeline(slide().image, test::SuperpixelOracle(labels), cfg);
    CHECK((r.mask.count() == 0 || r.mask.count() == r.mask.pixel_count()));
  }

  TEST_CASE("constant zero dense backend gives an empty mask") {
    CHECK(run_semantic_pipeline(slide().image, test::ConstantDense(0.0), small_config(Strategy::semantic)).mask.count() ==
          0);
    CHECK(run_semantic_pipeline(slide().image, test::ConstantDense(0.5), small_config(Strategy::semantic)).mask.count() ==
          slide().mask.pixel_count());
  }

  TEST_CASE("an empty prompt mask gives an empty prediction") {
    const auto r =
        run_prompt_pipeline(slide().image, slide().image, Mask(1024, 1024), NnTransferBackend{}, small_config(Strategy::prompt));
    CHECK(r.mask.count() == 0);
  }

  TEST_CASE("a prompt without tissue is a data error") {
    const Image white(256, 256, Rgb{255, 255, 255});
    try {
      run_prompt_pipeline(slide().image, white, Mask(256, 256), NnTransferBackend{}, small_config(Strategy::prompt));
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::data);
    }
  }

  TEST_CASE("output dims always match the input") {
    SyntheticSpec spec;
    spec.width = 1000;
    spec.height = 777;
    spec.blob_count = 2;
    spec.blob_radius_min = 100;
    spec.blob_radius_max = 150;
    spec.seed = 4;
    const auto s = generate_synthetic_wsi(spec);
    for (Strategy st : kAllStrategies) {
      auto cfg = small_config(st);
      if (st != Strategy::patch) cfg.resolution_factor = 16;
      PipelineResult r;
      switch (st) {
        case Strategy::patch: r = run_patch_pipeline(s.image, test::PatchOracle(s.mask), cfg); break;
        case Strategy::superpixel: r = run_superpixel_pipeline(s.image, ConstantPatch(0.7), cfg); break;
        case Strategy::semantic: r = run_semantic_pipeline(s.image, test::ConstantDense(0.7), cfg); break;
        case Strategy::prompt: r = run_prompt_pipeline(s.image, s.image, s.mask, NnTransferBackend{}, cfg); break;
      }
      CHECK(r.mask.width() == 1000);
      CHECK(r.mask.height() == 777);
    }
  }

  TEST_CASE("pipelines are identical with one and many threads") {
    const auto& s = slide();
    auto cfg_sp = small_config(Strategy::superpixel);
    const auto sp_labels = test::superpixel_oracle_labels(s.image, s.mask, 4, cfg_sp.slic);
    ModelParams dense_model = ModelParams::zeros(ModelKind::linear, kPixelFeatureDimension);
    dense_model.values[0] = -0.08;
    dense_model.values.back() = 4.0;
    const ModelBackend dense(dense_model, InputKind::image_patch, true);
    const auto run_all = [&] {
      std::vector<Mask> out;
      out.push_back(run_patch_pipeline(s.image, test::PatchOracle(s.mask), small_config(Strategy::patch)).mask);
      out.push_back(run_superpixel_pipeline(s.image, test::SuperpixelOracle(sp_labels), cfg_sp).mask);
      out.push_back(run_semantic_pipeline(s.image, dense, small_config(Strategy::semantic)).mask);
      out.push_back(run_prompt_pipeline(s.image, s.image, s.mask, NnTransferBackend{}, small_config(Strategy::prompt)).mask);
      return out;
    };
    std::vector<Mask> one, many;
    {
      parallel::ScopedThreads t(1);
      one = run_all();
    }
    {
      parallel::ScopedThreads t(4);
      many = run_all();
    }
    for (std::size_t i = 0; i < one.size(); ++i) CHECK(one[i] == many[i]);
  }

  TEST_CASE("timing records share stage names and are consistent") {
    CHECK(std::vector<std::string>(std::begin(kTimingStages), std::end(kTimingStages)) ==
          std::vector<std::string>{"tiling", "features", "inference", "reconstruction", "total"});
    const auto r = run_patch_pipeline(slide().image, test::PatchOracle(slide().mask), small_config(Strategy::patch));
    const auto& t = r.timing;
    for (double v : {t.tiling, t.features, t.inference, t.reconstruction}) CHECK(v >= 0.0);
    CHECK(t.total >= t.tiling + t.features + t.inference + t.reconstruction - 1e-3);
  }

  TEST_CASE("backend failures name the lowest failing patch") {
    auto cfg = small_config(Strategy::patch);
    try {
      run_patch_pipeline(slide().image, Failing(5), cfg);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::backend);
      CHECK(std::string(e.what()).rfind("patch 5: boom", 0) == 0);
    }
  }

  TEST_CASE("incompatible backends and configs are rejected") {
    CHECK_THROWS_AS(run_superpixel_pipeline(slide().image, test::ConstantDense(0.0), small_config(Strategy::superpixel)),
                    Error);
    CHECK_THROWS_AS(run_semantic_pipeline(slide().image, ConstantPatch(0.0), small_config(Strategy::semantic)), Error);
    CHECK_THROWS_AS(run_pipeline(slide().image, NnTransferBackend{}, small_config(Strategy::prompt)), Error);
    auto bad = small_config(Strategy::patch);
    bad.resolution_factor = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
    CHECK(parse_strategy("semantic") == Strategy::semantic);
    CHECK_THROWS_AS(parse_strategy("segment"), Error);
  }

  TEST_CASE("default configs follow the resolution split") {
    CHECK(PipelineConfig::defaults(Strategy::patch).resolution_factor == 1);
    for (Strategy s : {Strategy::superpixel, Strategy::semantic, Strategy::prompt})
      CHECK(PipelineConfig::defaults(s).resolution_factor == 16);
    CHECK(PipelineConfig::defaults(Strategy::semantic).stride == 224);
    CHECK(PipelineConfig::defaults(Strategy::patch).patch_size == 256);
    CHECK(PipelineConfig::defaults(Strategy::prompt).prompt_working_size == 448);
  }

  TEST_CASE("resize_mask keeps masks binary and sized") {
    const Mask m = test::disk_mask(300, 200, 150, 100, 60);
    const Mask small = resize_mask(m, 75, 50);
    CHECK(small.width() == 75);
    CHECK(small.height() == 50);
    CHECK(std::abs(double(small.count()) * 16 - double(m.count())) / double(m.count()) < 0.05);
  }
}
