#pragma once

#include <vector>

#include "wsib/augment.hpp"
#include "wsib/evalbench.hpp"
#include "wsib/pipelines.hpp"
#include "wsib/training.hpp"

namespace wsib {

struct TrainingSetOptions {
  int augment_copies = 1;  ///< augmented variants added per tissue patch (patch strategy)
  AugmentConfig augment;
  std::size_t max_pixels_per_slide = 20000;  ///< sampled pixels per slide (semantic strategy)
  std::uint64_t seed = 0;
};

/// Reference backend architecture per strategy: MLP for patch and superpixel
/// features, a linear per-pixel model for semantic.
Architecture default_architecture(Strategy strategy);

/// Builds the samples the strategy's reference backend is trained on, using
/// the same resolution, tiling and features its pipeline uses at inference.
Dataset build_training_set(Strategy strategy, const std::vector<BenchmarkCase>& slides, const PipelineConfig& cfg,
                           const TrainingSetOptions& options = {});

}  // namespace wsib
