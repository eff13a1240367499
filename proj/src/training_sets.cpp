#include "wsib/training_sets.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "wsib/error.hpp"
#include "wsib/features.hpp"
#include "wsib/superpixel.hpp"
#include "wsib/tiling.hpp"

namespace wsib {
namespace {

std::uint8_t majority(const Mask& m) { return 2 * m.count() >= m.pixel_count() ? 1 : 0; }

void add_patch_samples(Dataset& data, const BenchmarkCase& slide, std::size_t slide_index, const PipelineConfig& cfg,
                       const TrainingSetOptions& options) {
  const Image work = downsample(slide.image, cfg.resolution_factor);
  const Mask gt = cfg.resolution_factor == 1 ? slide.ground_truth
                                             : threshold(downsample_fraction(slide.ground_truth, cfg.resolution_factor), 0.5);
  const int size = std::min({cfg.patch_size, work.width(), work.height()});
  const PatchGrid grid = make_grid(work.width(), work.height(), size, std::min(cfg.stride, size));
  const auto copies = static_cast<std::size_t>(std::max(0, options.augment_copies));
  const std::size_t per_patch = 1 + copies;
  std::vector<std::vector<double>> rows(grid.size() * per_patch);
  std::vector<std::uint8_t> labels(rows.size());
  std::vector<std::uint8_t> keep(rows.size(), 0);
  const ReferenceExtractor extractor;
  const auto n = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto [x, y] = grid.origins[i];
    const Image patch = crop(work, x, y, size, size);
    if (!is_tissue(patch, cfg.tissue_threshold)) continue;
    const Mask patch_gt = crop(gt, x, y, size, size);
    const std::size_t base = static_cast<std::size_t>(i) * per_patch;
    rows[base] = image_features(patch, extractor);
    labels[base] = majority(patch_gt);
    keep[base] = 1;
    for (std::size_t c = 0; c < copies; ++c) {
      const std::uint64_t index = (slide_index << 40) | (static_cast<std::uint64_t>(i) << 8) | c;
      const auto [aug_image, aug_mask] = augment(patch, patch_gt, options.augment, index);
      rows[base + 1 + c] = image_features(aug_image, extractor);
      labels[base + 1 + c] = majority(aug_mask);
      keep[base + 1 + c] = 1;
    }
  }
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (keep[r]) data.add(rows[r], labels[r]);
}

void add_superpixel_samples(Dataset& data, const BenchmarkCase& slide, const PipelineConfig& cfg) {
  const Image work = downsample(slide.image, cfg.resolution_factor);
  const Mask gt = threshold(downsample_fraction(slide.ground_truth, cfg.resolution_factor), 0.5);
  const SuperpixelMap map = slic(work, cfg.slic);
  const FeatureMatrix features = aggregate_features(work, map, ReferenceExtractor{});
  const auto labels = superpixel_ground_truth(map, gt);
  for (std::size_t i = 0; i < features.rows; ++i) data.add(features.row(i), labels[i]);
}

void add_pixel_samples(Dataset& data, const BenchmarkCase& slide, std::size_t slide_index, const PipelineConfig& cfg,
                       const TrainingSetOptions& options) {
  const Image work = downsample(slide.image, cfg.resolution_factor);
  const Mask gt = threshold(downsample_fraction(slide.ground_truth, cfg.resolution_factor), 0.5);
  const auto features = pixel_features(work);
  std::vector<std::size_t> order(work.pixel_count());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.seed ^ (0x9e3779b97f4a7c15ULL * (slide_index + 1)));
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(order.size(), options.max_pixels_per_slide));
  std::sort(order.begin(), order.end());
  for (auto p : order)
    data.add(std::span<const double>(features.data() + p * kPixelFeatureDimension, kPixelFeatureDimension),
             gt.data()[p]);
}

}  // namespace

Architecture default_architecture(Strategy strategy) {
  if (strategy == Strategy::semantic) return {ModelKind::linear, 0};
  return {ModelKind::mlp, 64};
}

Dataset build_training_set(Strategy strategy, const std::vector<BenchmarkCase>& slides, const PipelineConfig& cfg,
                           const TrainingSetOptions& options) {
  if (slides.empty()) throw_data("no training slides");
  Dataset data;
  data.dim = strategy == Strategy::semantic ? kPixelFeatureDimension : ReferenceExtractor::kDimension;
  for (std::size_t s = 0; s < slides.size(); ++s) {
    require_same_dims(slides[s].image, slides[s].ground_truth, "training slide vs mask");
    switch (strategy) {
      case Strategy::patch: add_patch_samples(data, slides[s], s, cfg, options); break;
      case Strategy::superpixel: add_superpixel_samples(data, slides[s], cfg); break;
      case Strategy::semantic: add_pixel_samples(data, slides[s], s, cfg, options); break;
      case Strategy::prompt:
        throw_usage("prompt strategy uses an in-context backend and has nothing to train");
    }
  }
  if (data.size() == 0) throw_data(fmt::format("{} training set is empty (no tissue found)", to_string(strategy)));
  return data;
}

}  // namespace wsib
