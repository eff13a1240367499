#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wsib/backends.hpp"
#include "wsib/image.hpp"
#include "wsib/pipelines.hpp"

namespace wsib {

struct Confusion {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  bool operator==(const Confusion&) const = default;
};

Confusion confusion(const Mask& pred, const Mask& gt);

/// 2tp / (2tp + fp + fn); two empty masks score `empty_score`.
double dice(const Confusion& c, double empty_score = 1.0);
double dice(const Mask& pred, const Mask& gt, double empty_score = 1.0);

struct EvalCell {
  std::optional<double> dice;  ///< empty when the pipeline failed
  Confusion counts;
  TimingRecord timing;
  std::string error;

  bool ok() const noexcept { return dice.has_value(); }
};

enum class Mark { none, best, second };

/// Best and second-best entries of a row; failed entries are skipped and
/// ties go to the earlier column. Values are compared as displayed (3 decimals).
std::vector<Mark> rank_marks(const std::vector<std::optional<double>>& row, bool higher_is_better);

struct EvalReport {
  std::vector<std::string> images;
  std::vector<std::string> strategies;
  std::vector<std::vector<EvalCell>> cells;  ///< [image][strategy]

  /// Report from bare numbers; `times` may be empty.
  static EvalReport from_values(std::vector<std::string> images, std::vector<std::string> strategies,
                                const std::vector<std::vector<std::optional<double>>>& dice,
                                const std::vector<std::vector<std::optional<double>>>& times = {});

  std::vector<std::optional<double>> dice_row(std::size_t image) const;
  std::vector<std::optional<double>> time_row(std::size_t image) const;
  std::vector<std::optional<double>> mean_dice() const;
  std::vector<std::optional<double>> mean_time() const;
  std::size_t failed_cells() const;
  std::size_t total_cells() const { return images.size() * strategies.size(); }
};

enum class ReportStyle { markdown, csv };

std::string format_report(const EvalReport& report, ReportStyle style);
EvalReport parse_report_csv(const std::string& text);
std::string format_timings_json(const EvalReport& report);

struct BenchmarkCase {
  std::string name;
  Image image;
  Mask ground_truth;
};

struct StrategySetup {
  std::string name;
  PipelineConfig config;
  std::shared_ptr<const Backend> backend;
  /// Per-image backend, used instead of `backend` when set.
  std::function<std::shared_ptr<const Backend>(std::size_t image_index)> backend_for;
  std::optional<PromptExample> prompt;
  std::string setup_error;  ///< non-empty marks every cell of this strategy as failed
};

/// Evaluates every (image, strategy) cell; failures are recorded per cell.
EvalReport run_benchmark(const std::vector<BenchmarkCase>& dataset, const std::vector<StrategySetup>& strategies,
                         std::vector<Mask>* predictions = nullptr);

/// Loads slide.png/mask.png pairs from `dir` itself or from its immediate
/// subdirectories (sorted by name).
std::vector<BenchmarkCase> load_dataset(const std::filesystem::path& dir);

void write_report_files(const EvalReport& report, const std::filesystem::path& out_dir);

}  // namespace wsib
