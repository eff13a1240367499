#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "wsib/backends.hpp"
#include "wsib/image.hpp"
#include "wsib/stain.hpp"
#include "wsib/superpixel.hpp"
#include "wsib/tiling.hpp"

namespace wsib {

enum class Strategy { patch, superpixel, semantic, prompt };

inline constexpr Strategy kAllStrategies[] = {Strategy::patch, Strategy::superpixel, Strategy::semantic,
                                              Strategy::prompt};

std::string to_string(Strategy strategy);
Strategy parse_strategy(const std::string& text);

struct PipelineConfig {
  Strategy strategy = Strategy::patch;
  int resolution_factor = 1;
  int patch_size = 256;
  int stride = 256;
  SlicParams slic;
  double tissue_threshold = 0.05;
  double probability_threshold = 0.5;
  int prompt_working_size = 448;
  InContextConfig in_context;
  NormalizeConfig normalize;
  BackendDescriptor backend;
  std::filesystem::path prompt_image;
  std::filesystem::path prompt_mask;

  /// Factor 1 with 256 non-overlapping patches for the patch strategy,
  /// factor 16 for the others; semantic tiles overlap with stride 224.
  static PipelineConfig defaults(Strategy strategy);
  void validate() const;
};

struct TimingRecord {
  double tiling = 0.0;
  double features = 0.0;
  double inference = 0.0;
  double reconstruction = 0.0;
  double total = 0.0;
};

inline constexpr const char* kTimingStages[] = {"tiling", "features", "inference", "reconstruction", "total"};

struct PipelineResult {
  Mask mask;
  TimingRecord timing;
  std::optional<PatchGrid> grid;
  std::optional<SuperpixelMap> superpixels;
  std::size_t predicted_items = 0;
};

PipelineResult run_patch_pipeline(const Image& image, const Backend& backend, const PipelineConfig& cfg);
PipelineResult run_superpixel_pipeline(const Image& image, const Backend& backend, const PipelineConfig& cfg);
PipelineResult run_semantic_pipeline(const Image& image, const Backend& backend, const PipelineConfig& cfg);
PipelineResult run_prompt_pipeline(const Image& image, const Image& prompt_image, const Mask& prompt_mask,
                                   const Backend& backend, const PipelineConfig& cfg);

struct PromptExample {
  Image image;
  Mask mask;
};

/// Dispatches on cfg.strategy; the prompt strategy requires `prompt`.
PipelineResult run_pipeline(const Image& image, const Backend& backend, const PipelineConfig& cfg,
                            const PromptExample* prompt = nullptr);

/// Area-vote resize of a binary mask.
Mask resize_mask(const Mask& mask, int width, int height);

}  // namespace wsib
