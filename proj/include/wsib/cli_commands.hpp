#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wsib/evalbench.hpp"
#include "wsib/pipelines.hpp"
#include "wsib/training.hpp"

namespace wsib::cli {

std::string tool_version();

struct RunManifest {
  std::string command;
  std::filesystem::path config_path;
  std::vector<std::string> resolved_configs;
  std::uint64_t seed = 0;
  std::filesystem::path output;
  std::vector<std::pair<std::string, std::string>> arguments;
};

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);

struct SynthOptions {
  std::filesystem::path spec;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
};

void cmd_synth(const SynthOptions& options);

struct TrainOptions {
  Strategy strategy = Strategy::superpixel;
  std::filesystem::path data;
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
};

TrainResult cmd_train(const TrainOptions& options);

struct RunOptions {
  Strategy strategy = Strategy::superpixel;
  std::filesystem::path input;
  std::filesystem::path model;
  std::filesystem::path endpoint;
  std::filesystem::path prompt;
  std::filesystem::path prompt_mask;
  std::filesystem::path config;
  std::filesystem::path out;
  std::filesystem::path ground_truth;
  std::optional<std::uint64_t> seed;
};

struct RunSummary {
  TimingRecord timing;
  std::optional<double> dice;
};

RunSummary cmd_run(const RunOptions& options);

struct BenchOptions {
  std::filesystem::path dataset;
  std::vector<Strategy> strategies{std::begin(kAllStrategies), std::end(kAllStrategies)};
  std::filesystem::path config;
  std::filesystem::path models;  ///< directory holding <strategy>.wsmp files
  std::filesystem::path prompt;
  std::filesystem::path prompt_mask;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
};

/// Returns the process exit code: 0 unless every cell failed.
int cmd_bench(const BenchOptions& options, EvalReport* report = nullptr);

struct NormalizeOptions {
  std::filesystem::path input;
  std::filesystem::path reference;
  std::filesystem::path config;
  std::filesystem::path out;     ///< directory for the image, stain models and manifest
  std::filesystem::path output;  ///< normalized PNG path
  std::optional<std::uint64_t> seed;
};

void cmd_normalize(const NormalizeOptions& options);

struct SlicOptions {
  std::filesystem::path input;
  std::filesystem::path config;
  std::filesystem::path out;
  int resolution_factor = 16;
  std::optional<int> k_target;
  std::optional<double> compactness;
};

void cmd_slic(const SlicOptions& options);

}  // namespace wsib::cli
