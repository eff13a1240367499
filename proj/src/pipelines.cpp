#include "wsib/pipelines.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <optional>

#include <fmt/format.h>

#include "wsib/error.hpp"
#include "wsib/features.hpp"

namespace wsib {
namespace {

using Clock = std::chrono::steady_clock;

class Stopwatch {
 public:
  Stopwatch() : start_(Clock::now()), lap_(start_) {}

  double lap() {
    const auto now = Clock::now();
    const double s = std::chrono::duration<double>(now - lap_).count();
    lap_ = now;
    return s;
  }
  double total() const { return std::chrono::duration<double>(Clock::now() - start_).count(); }

 private:
  Clock::time_point start_;
  Clock::time_point lap_;
};

// Runs fn(i) for i in [0, n) in parallel; the lowest-index failure is rethrown
// with the item named, so error reporting does not depend on scheduling.
template <typename Fn>
void for_each_item(std::size_t n, const char* item_name, Fn&& fn) {
  std::vector<std::optional<Error>> errors(n);
  std::vector<std::exception_ptr> other(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (const Error& e) {
      errors[i].emplace(e.kind(), fmt::format("{} {}: {}", item_name, i, e.what()));
    } catch (...) {
      other[i] = std::current_exception();
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) throw *errors[i];
    if (other[i]) std::rethrow_exception(other[i]);
  }
}

std::uint8_t decide(double p, double t) {
  if (!(p >= 0.0 && p <= 1.0)) throw_backend(fmt::format("backend returned probability {} outside [0, 1]", p));
  return p >= t ? 1 : 0;
}

void require_input(const Backend& backend, std::initializer_list<InputKind> allowed, const char* strategy) {
  const auto kind = backend.descriptor().input_kind;
  if (std::find(allowed.begin(), allowed.end(), kind) == allowed.end())
    throw_usage(fmt::format("{} pipeline cannot use a backend with {} input", strategy, to_string(kind)));
}

}  // namespace

std::string to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::patch: return "patch";
    case Strategy::superpixel: return "superpixel";
    case Strategy::semantic: return "semantic";
    case Strategy::prompt: return "prompt";
  }
  return "?";
}

Strategy parse_strategy(const std::string& text) {
  for (auto s : kAllStrategies)
    if (to_string(s) == text) return s;
  throw_usage(fmt::format("unknown strategy '{}' (expected patch, superpixel, semantic or prompt)", text));
}

PipelineConfig PipelineConfig::defaults(Strategy strategy) {
  PipelineConfig cfg;
  cfg.strategy = strategy;
  switch (strategy) {
    case Strategy::patch:
      cfg.resolution_factor = 1;
      cfg.backend = {BackendKind::mlp, InputKind::feature_vector, {}, ReferenceExtractor::kDimension, false};
      break;
    case Strategy::superpixel:
      cfg.resolution_factor = 16;
      cfg.backend = {BackendKind::mlp, InputKind::feature_vector, {}, ReferenceExtractor::kDimension, false};
      break;
    case Strategy::semantic:
      cfg.resolution_factor = 16;
      cfg.stride = 224;
      cfg.backend = {BackendKind::linear, InputKind::image_patch, {}, kPixelFeatureDimension, true};
      break;
    case Strategy::prompt:
      cfg.resolution_factor = 16;
      cfg.backend = {BackendKind::nn_transfer, InputKind::image_pair, {}, 0, false};
      break;
  }
  return cfg;
}

void PipelineConfig::validate() const {
  if (resolution_factor < 1) throw_usage("resolution_factor must be >= 1");
  if (patch_size < 1) throw_usage("patch_size must be >= 1");
  if (stride < 1 || stride > patch_size) throw_usage("stride must lie in [1, patch_size]");
  if (!(probability_threshold >= 0.0 && probability_threshold <= 1.0))
    throw_usage("probability_threshold must lie in [0, 1]");
  if (tissue_threshold < 0.0) throw_usage("tissue_threshold must be >= 0");
  if (prompt_working_size < 1) throw_usage("prompt_working_size must be >= 1");
  if (slic.k_target < 1) throw_usage("slic k_target must be >= 1");
  backend.validate();
}

Mask resize_mask(const Mask& mask, int width, int height) {
  if (width == mask.width() && height == mask.height()) return mask;
  const int factor = std::max(1, std::min(mask.width() / width, mask.height() / height));
  const Mask reduced = factor == 1 ? mask : threshold(downsample_fraction(mask, factor), 0.5);
  return upsample_nearest(reduced, width, height);
}

PipelineResult run_patch_pipeline(const Image& image, const Backend& backend, const PipelineConfig& cfg) {
  cfg.validate();
  require_input(backend, {InputKind::feature_vector, InputKind::image_patch}, "patch");
  if (backend.descriptor().dense) throw_usage("patch pipeline needs a per-patch classifier, not a dense backend");
  Stopwatch clock;
  PipelineResult result;

  const Image work = downsample(image, cfg.resolution_factor);
  const int size = std::min({cfg.patch_size, work.width(), work.height()});
  const int stride = std::min(cfg.stride, size);
  const PatchGrid grid = make_grid(work.width(), work.height(), size, stride);
  const auto patches = extract_patches(work, grid);
  result.timing.tiling = clock.lap();

  const bool vectors = backend.descriptor().input_kind == InputKind::feature_vector;
  const ReferenceExtractor extractor;
  std::vector<std::uint8_t> tissue(grid.size());
  std::vector<std::vector<double>> features(grid.size());
  for_each_item(grid.size(), "patch", [&](std::size_t i) {
    tissue[i] = is_tissue(patches[i], cfg.tissue_threshold) ? 1 : 0;
    if (tissue[i] && vectors) features[i] = image_features(patches[i], extractor);
  });
  result.timing.features = clock.lap();

  std::vector<std::uint8_t> labels(grid.size(), 0);
  for_each_item(grid.size(), "patch", [&](std::size_t i) {
    if (!tissue[i]) return;
    const ItemRef item{i, grid.origins[i].x, grid.origins[i].y};
    const double p = vectors ? backend.predict(features[i], item) : backend.predict(patches[i], item);
    labels[i] = decide(p, cfg.probability_threshold);
  });
  result.predicted_items = static_cast<std::size_t>(std::count(tissue.begin(), tissue.end(), 1));
  result.timing.inference = clock.lap();

  const Mask work_mask = stitch_patch_labels(grid, labels);
  result.mask = cfg.resolution_factor == 1 ? work_mask : upsample_nearest(work_mask, image.width(), image.height());
  result.grid = grid;
  result.timing.reconstruction = clock.lap();
  result.timing.total = clock.total();
  return result;
}

PipelineResult run_superpixel_pipeline(const Image& image, const Backend& backend, const PipelineConfig& cfg) {
  cfg.validate();
  require_input(backend, {InputKind::feature_vector}, "superpixel");
  Stopwatch clock;
  PipelineResult result;

  const Image work = downsample(image, cfg.resolution_factor);
  SuperpixelMap map = slic(work, cfg.slic);
  result.timing.tiling = clock.lap();

  const FeatureMatrix features = aggregate_features(work, map, ReferenceExtractor{});
  result.timing.features = clock.lap();

  std::vector<std::uint8_t> labels(map.count, 0);
  for_each_item(map.count, "superpixel", [&](std::size_t i) {
    labels[i] = decide(backend.predict(features.row(i), ItemRef{i, 0, 0}), cfg.probability_threshold);
  });
  result.predicted_items = map.count;
  result.timing.inference = clock.lap();

  result.mask = upsample_nearest(paint_labels(map, labels), image.width(), image.height());
  result.superpixels = std::move(map);
  result.timing.reconstruction = clock.lap();
  result.timing.total = clock.total();
  return result;
}

PipelineResult run_semantic_pipeline(const Image& image, const Backend& backend, const PipelineConfig& cfg) {
  cfg.validate();
  require_input(backend, {InputKind::image_patch}, "semantic");
  if (!backend.descriptor().dense) throw_usage("semantic pipeline needs a dense backend");
  Stopwatch clock;
  PipelineResult result;

  const Image work = downsample(image, cfg.resolution_factor);
  const int size = std::min({cfg.patch_size, work.width(), work.height()});
  const int stride = std::min(cfg.stride, size);
  const PatchGrid grid = make_grid(work.width(), work.height(), size, stride);
  const auto tiles = extract_patches(work, grid);
  result.timing.tiling = clock.lap();
  result.timing.features = clock.lap();

  std::vector<ProbabilityMap> maps(grid.size());
  for_each_item(grid.size(), "tile", [&](std::size_t i) {
    maps[i] = backend.predict_dense(tiles[i], ItemRef{i, grid.origins[i].x, grid.origins[i].y});
    if (maps[i].width() != size || maps[i].height() != size)
      throw_backend(fmt::format("dense backend returned {}x{} for a {}x{} tile", maps[i].width(), maps[i].height(),
                                size, size));
    for (double p : maps[i].data()) decide(p, 0.5);
  });
  result.predicted_items = grid.size();
  result.timing.inference = clock.lap();

  const Mask work_mask = threshold(stitch_dense(grid, maps), cfg.probability_threshold);
  result.mask = upsample_nearest(work_mask, image.width(), image.height());
  result.grid = grid;
  result.timing.reconstruction = clock.lap();
  result.timing.total = clock.total();
  return result;
}

PipelineResult run_prompt_pipeline(const Image& image, const Image& prompt_image, const Mask& prompt_mask,
                                   const Backend& backend, const PipelineConfig& cfg) {
  cfg.validate();
  require_input(backend, {InputKind::image_pair}, "prompt");
  require_same_dims(prompt_image, prompt_mask, "prompt image vs prompt mask");
  Stopwatch clock;
  PipelineResult result;

  const int side = cfg.prompt_working_size;
  const Image query = downsample(image, cfg.resolution_factor);
  const Image prompt = resize(prompt_image, side, side);
  const Mask prompt_labels = resize_mask(prompt_mask, side, side);
  result.timing.tiling = clock.lap();

  const Image query_work = resize(normalize_to_reference(query, prompt, cfg.normalize), side, side);
  result.timing.features = clock.lap();

  const Mask work_mask = backend.in_context_predict(prompt, prompt_labels, query_work, cfg.in_context);
  if (!same_dims(work_mask, query_work))
    throw_backend(fmt::format("in-context backend returned {}x{}, expected {}x{}", work_mask.width(),
                              work_mask.height(), side, side));
  result.predicted_items = 1;
  result.timing.inference = clock.lap();

  result.mask = upsample_nearest(work_mask, image.width(), image.height());
  result.timing.reconstruction = clock.lap();
  result.timing.total = clock.total();
  return result;
}

PipelineResult run_pipeline(const Image& image, const Backend& backend, const PipelineConfig& cfg,
                            const PromptExample* prompt) {
  switch (cfg.strategy) {
    case Strategy::patch: return run_patch_pipeline(image, backend, cfg);
    case Strategy::superpixel: return run_superpixel_pipeline(image, backend, cfg);
    case Strategy::semantic: return run_semantic_pipeline(image, backend, cfg);
    case Strategy::prompt:
      if (prompt == nullptr) throw_usage("prompt strategy requires a prompt image and mask");
      return run_prompt_pipeline(image, prompt->image, prompt->mask, backend, cfg);
  }
  throw_usage("unknown strategy");
}

}  // namespace wsib
