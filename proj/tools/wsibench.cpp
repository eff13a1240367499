#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "wsib/cli_commands.hpp"
#include "wsib/error.hpp"
#include "wsib/parallel.hpp"

using namespace wsib;

namespace {

std::vector<Strategy> parse_strategy_list(const std::string& text) {
  std::vector<Strategy> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(parse_strategy(item));
  if (out.empty()) throw_usage("--strategies is empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Whole-slide segmentation benchmark: synthetic data, reference backends and four pipelines"};
  app.set_version_flag("--version", cli::tool_version());
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  const auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", seed, "Seed for all randomness"); };

  cli::SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic slide and its mask");
  synth_cmd->add_option("--spec", synth.spec, "Slide spec (key = value config)")->required();
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  add_seed(synth_cmd);

  cli::TrainOptions train;
  std::string train_strategy;
  auto* train_cmd = app.add_subcommand("train", "Train a reference backend for a strategy");
  train_cmd->add_option("--strategy", train_strategy, "patch, superpixel or semantic")->required();
  train_cmd->add_option("--data", train.data, "Directory of slide.png/mask.png pairs")->required();
  train_cmd->add_option("--config", train.config, "Config file");
  train_cmd->add_option("--out", train.out, "Output model file (.wsmp)")->required();
  add_seed(train_cmd);

  cli::RunOptions run;
  std::string run_strategy;
  auto* run_cmd = app.add_subcommand("run", "Segment one slide with one strategy");
  run_cmd->add_option("--strategy", run_strategy, "patch, superpixel, semantic or prompt")->required();
  run_cmd->add_option("--input", run.input, "Input slide PNG")->required();
  run_cmd->add_option("--model", run.model, "Trained model (.wsmp)");
  run_cmd->add_option("--endpoint", run.endpoint, "External backend directory");
  run_cmd->add_option("--prompt", run.prompt, "Prompt example image");
  run_cmd->add_option("--prompt-mask", run.prompt_mask, "Prompt example mask");
  run_cmd->add_option("--mask", run.ground_truth, "Ground-truth mask; prints Dice");
  run_cmd->add_option("--config", run.config, "Config file");
  run_cmd->add_option("--out", run.out, "Output directory")->required();
  add_seed(run_cmd);

  cli::BenchOptions bench;
  std::string bench_strategies = "patch,superpixel,semantic,prompt";
  auto* bench_cmd = app.add_subcommand("bench", "Run strategies over a dataset and write reports");
  bench_cmd->add_option("--dataset", bench.dataset, "Directory of slide.png/mask.png pairs")->required();
  bench_cmd->add_option("--strategies", bench_strategies, "Comma-separated strategies")->capture_default_str();
  bench_cmd->add_option("--models", bench.models, "Directory holding <strategy>.wsmp models");
  bench_cmd->add_option("--prompt", bench.prompt, "Prompt example image");
  bench_cmd->add_option("--prompt-mask", bench.prompt_mask, "Prompt example mask");
  bench_cmd->add_option("--config", bench.config, "Config file");
  bench_cmd->add_option("--out", bench.out, "Output directory")->required();
  add_seed(bench_cmd);

  cli::NormalizeOptions normalize;
  auto* normalize_cmd = app.add_subcommand("normalize", "Normalize a slide's stain appearance to a reference");
  normalize_cmd->add_option("--input", normalize.input, "Source image")->required();
  normalize_cmd->add_option("--reference", normalize.reference, "Reference image")->required();
  normalize_cmd->add_option("--config", normalize.config, "Config file");
  normalize_cmd->add_option("--output", normalize.output, "Normalized image PNG");
  normalize_cmd->add_option("--out", normalize.out, "Output directory for image, stain models and manifest");
  add_seed(normalize_cmd);

  cli::SlicOptions slic_opts;
  auto* slic_cmd = app.add_subcommand("slic", "Dump superpixels of a slide");
  slic_cmd->add_option("--input", slic_opts.input, "Input slide PNG")->required();
  slic_cmd->add_option("--factor", slic_opts.resolution_factor, "Downsampling factor")->capture_default_str();
  slic_cmd->add_option("--k", slic_opts.k_target, "Target superpixel count");
  slic_cmd->add_option("--compactness", slic_opts.compactness, "SLIC compactness");
  slic_cmd->add_option("--config", slic_opts.config, "Config file");
  slic_cmd->add_option("--out", slic_opts.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::usage);
  }

  try {
    parallel::configure_from_env();
    if (*synth_cmd) {
      synth.seed = seed;
      cli::cmd_synth(synth);
      fmt::print("wrote {}\n", synth.out.string());
    } else if (*train_cmd) {
      train.strategy = parse_strategy(train_strategy);
      train.seed = seed;
      const auto result = cli::cmd_train(train);
      fmt::print("trained {} model: best epoch {}, stop epoch {}, best val loss {:.6f}\n", train_strategy,
                 result.best_epoch, result.stop_epoch, result.best_val_loss);
    } else if (*run_cmd) {
      run.strategy = parse_strategy(run_strategy);
      run.seed = seed;
      const auto summary = cli::cmd_run(run);
      fmt::print("total {:.3f} s", summary.timing.total);
      if (summary.dice) fmt::print(", dice {:.4f}", *summary.dice);
      fmt::print("\n");
    } else if (*bench_cmd) {
      bench.strategies = parse_strategy_list(bench_strategies);
      bench.seed = seed;
      EvalReport report;
      const int code = cli::cmd_bench(bench, &report);
      fmt::print("{}", format_report(report, ReportStyle::markdown));
      return code;
    } else if (*normalize_cmd) {
      normalize.seed = seed;
      cli::cmd_normalize(normalize);
    } else if (*slic_cmd) {
      cli::cmd_slic(slic_opts);
    }
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return static_cast<int>(ErrorKind::data);
  }
  return 0;
}
