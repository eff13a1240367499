#include "wsib/cli_commands.hpp"

#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "wsib/config.hpp"
#include "wsib/error.hpp"
#include "wsib/features.hpp"
#include "wsib/overlay.hpp"
#include "wsib/png_io.hpp"
#include "wsib/stain.hpp"
#include "wsib/superpixel.hpp"
#include "wsib/synthetic.hpp"
#include "wsib/training_sets.hpp"

namespace fs = std::filesystem;

namespace wsib::cli {
namespace {

constexpr Rgb kOverlayColor{0, 200, 0};
constexpr double kOverlayAlpha = 0.4;

Config load_config(const fs::path& path, const std::optional<std::uint64_t>& seed) {
  Config cfg = path.empty() ? Config::parse("", "<defaults>") : Config::load(path);
  if (seed) cfg.set("", "seed", std::to_string(*seed));
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text;
  if (!out) throw_data(fmt::format("{}: write failed", path.string()));
}

std::string timing_json(const TimingRecord& t) {
  nlohmann::ordered_json j = {{"tiling", t.tiling},
                              {"features", t.features},
                              {"inference", t.inference},
                              {"reconstruction", t.reconstruction},
                              {"total", t.total}};
  return j.dump(2) + "\n";
}

fs::path with_suffix(const fs::path& path, const std::string& suffix) { return fs::path(path.string() + suffix); }

// Backend for a strategy: model files decide linear vs MLP, external and
// nn-transfer descriptors are used as given.
std::unique_ptr<Backend> strategy_backend(const PipelineConfig& cfg) {
  const auto& d = cfg.backend;
  if (d.kind == BackendKind::external) return make_backend(d);
  if (d.kind == BackendKind::nn_transfer) return std::make_unique<NnTransferBackend>();
  if (d.location.empty())
    throw_usage(fmt::format("{} strategy needs a trained model (--model or [{}] model)", to_string(cfg.strategy),
                            to_string(cfg.strategy)));
  if (!fs::exists(d.location)) throw_data(fmt::format("{}: no such model file", d.location.string()));
  return std::make_unique<ModelBackend>(load_model(d.location), d.input_kind, d.dense);
}

PromptExample load_prompt(const fs::path& image, const fs::path& mask) {
  PromptExample p{load_image(image), load_mask(mask)};
  require_same_dims(p.image, p.mask, "prompt image vs prompt mask");
  return p;
}

}  // namespace

std::string tool_version() { return WSIB_VERSION; }

void write_manifest(const RunManifest& m, const fs::path& path) {
  nlohmann::ordered_json args = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.arguments) args[k] = v;
  nlohmann::ordered_json j = {{"tool", "wsibench"},
                              {"version", tool_version()},
                              {"command", m.command},
                              {"config", m.config_path.string()},
                              {"seed", m.seed},
                              {"output", m.output.string()},
                              {"arguments", args},
                              {"resolved", m.resolved_configs}};
  write_text(path, j.dump(2) + "\n");
}

void cmd_synth(const SynthOptions& o) {
  if (o.spec.empty() || o.out.empty()) throw_usage("synth requires --spec and --out");
  Config cfg = Config::load(o.spec);
  if (o.seed) cfg.set("", "seed", std::to_string(*o.seed));
  const SyntheticSpec spec = synthetic_spec_from_config(cfg);
  fs::create_directories(o.out);
  const std::string resolved = format_synthetic_spec(spec);
  write_manifest({"synth", o.spec, {resolved}, spec.seed, o.out, {{"spec", o.spec.string()}}}, o.out / "manifest.json");
  const auto slide = generate_synthetic_wsi(spec);
  save_image(slide.image, o.out / "slide.png");
  save_mask(slide.mask, o.out / "mask.png");
  write_text(o.out / "spec.resolved", resolved);
}

TrainResult cmd_train(const TrainOptions& o) {
  if (o.data.empty() || o.out.empty()) throw_usage("train requires --data and --out");
  if (o.strategy == Strategy::prompt) throw_usage("prompt strategy uses an in-context backend and has nothing to train");
  const Config cfg = load_config(o.config, o.seed);
  const TrainConfig train_cfg = train_config_from(cfg);
  const PipelineConfig pipeline = pipeline_config_from(cfg, o.strategy);
  TrainingSetOptions set_options;
  set_options.augment = augment_config_from(cfg);
  set_options.augment_copies = cfg.get_int("train", "augment_copies", set_options.augment_copies);
  set_options.max_pixels_per_slide = static_cast<std::size_t>(
      cfg.get_u64("train", "max_pixels_per_slide", set_options.max_pixels_per_slide));
  set_options.seed = train_cfg.seed;
  Architecture arch = default_architecture(o.strategy);
  if (arch.kind == ModelKind::mlp) arch.hidden = static_cast<std::size_t>(cfg.get_int("train", "hidden", 64));

  write_manifest({"train",
                  o.config,
                  {cfg.dump(), format_pipeline_config(pipeline)},
                  train_cfg.seed,
                  o.out,
                  {{"strategy", to_string(o.strategy)}, {"data", o.data.string()}}},
                 with_suffix(o.out, ".manifest.json"));

  const auto slides = load_dataset(o.data);
  const Dataset data = build_training_set(o.strategy, slides, pipeline, set_options);
  TrainResult result = train_classifier(data, arch, train_cfg);
  save_model(result.model, o.out);

  nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
  for (const auto& e : result.log)
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  nlohmann::ordered_json log = {{"strategy", to_string(o.strategy)},
                                {"samples", data.size()},
                                {"train_size", result.train_size},
                                {"val_size", result.val_size},
                                {"best_epoch", result.best_epoch},
                                {"best_val_loss", result.best_val_loss},
                                {"stop_epoch", result.stop_epoch},
                                {"early_stopped", result.early_stopped},
                                {"patience", train_cfg.patience},
                                {"epochs", epochs}};
  write_text(with_suffix(o.out, ".log.json"), log.dump(2) + "\n");
  return result;
}

RunSummary cmd_run(const RunOptions& o) {
  if (o.input.empty() || o.out.empty()) throw_usage("run requires --input and --out");
  const Config cfg = load_config(o.config, o.seed);
  PipelineConfig pipeline = pipeline_config_from(cfg, o.strategy);
  if (!o.model.empty()) pipeline.backend.location = o.model;
  if (!o.endpoint.empty()) {
    pipeline.backend.kind = BackendKind::external;
    pipeline.backend.location = o.endpoint;
  }
  if (!o.prompt.empty()) pipeline.prompt_image = o.prompt;
  if (!o.prompt_mask.empty()) pipeline.prompt_mask = o.prompt_mask;
  if (o.strategy == Strategy::prompt) {
    if (pipeline.prompt_image.empty()) throw_usage("prompt strategy requires --prompt");
    if (pipeline.prompt_mask.empty()) throw_usage("prompt strategy requires --prompt-mask");
  }
  pipeline.validate();

  fs::create_directories(o.out);
  write_manifest({"run",
                  o.config,
                  {format_pipeline_config(pipeline)},
                  cfg.get_u64("", "seed", 0),
                  o.out,
                  {{"strategy", to_string(o.strategy)}, {"input", o.input.string()}}},
                 o.out / "manifest.json");

  const Image image = load_image(o.input);
  const auto backend = strategy_backend(pipeline);
  std::optional<PromptExample> prompt;
  if (o.strategy == Strategy::prompt) prompt = load_prompt(pipeline.prompt_image, pipeline.prompt_mask);
  const auto result = run_pipeline(image, *backend, pipeline, prompt ? &*prompt : nullptr);

  save_mask(result.mask, o.out / "pred.png");
  save_image(render_overlay(image, result.mask, kOverlayColor, kOverlayAlpha), o.out / "overlay.png");
  write_text(o.out / "timing.json", timing_json(result.timing));
  if (result.grid) save_grid_manifest(*result.grid, o.out / "grid.txt");
  if (result.superpixels) save_superpixel_map(*result.superpixels, o.out / "superpixels.wspx");

  RunSummary summary{result.timing, std::nullopt};
  if (!o.ground_truth.empty()) summary.dice = dice(result.mask, load_mask(o.ground_truth));
  return summary;
}

int cmd_bench(const BenchOptions& o, EvalReport* report_out) {
  if (o.dataset.empty() || o.out.empty()) throw_usage("bench requires --dataset and --out");
  if (o.strategies.empty()) throw_usage("bench requires at least one strategy");
  const Config cfg = load_config(o.config, o.seed);
  std::vector<PipelineConfig> configs;
  std::vector<std::string> resolved;
  for (auto s : o.strategies) {
    PipelineConfig p = pipeline_config_from(cfg, s);
    if (p.backend.location.empty() && !o.models.empty() && s != Strategy::prompt)
      p.backend.location = o.models / (to_string(s) + ".wsmp");
    if (!o.prompt.empty()) p.prompt_image = o.prompt;
    if (!o.prompt_mask.empty()) p.prompt_mask = o.prompt_mask;
    resolved.push_back(format_pipeline_config(p));
    configs.push_back(std::move(p));
  }
  fs::create_directories(o.out);
  std::string list;
  for (auto s : o.strategies) list += (list.empty() ? "" : ",") + to_string(s);
  write_manifest({"bench",
                  o.config,
                  resolved,
                  cfg.get_u64("", "seed", 0),
                  o.out,
                  {{"dataset", o.dataset.string()}, {"strategies", list}, {"models", o.models.string()}}},
                 o.out / "manifest.json");

  const auto dataset = load_dataset(o.dataset);
  std::vector<StrategySetup> setups;
  for (const auto& p : configs) {
    StrategySetup setup{to_string(p.strategy), p, nullptr, {}, std::nullopt, {}};
    try {
      setup.backend = strategy_backend(p);
      if (p.strategy == Strategy::prompt) {
        if (p.prompt_image.empty() || p.prompt_mask.empty())
          throw_usage("prompt strategy requires a prompt image and mask (--prompt/--prompt-mask or [prompt])");
        setup.prompt = load_prompt(p.prompt_image, p.prompt_mask);
      }
    } catch (const std::exception& e) {
      setup.setup_error = e.what();
    }
    setups.push_back(std::move(setup));
  }
  const EvalReport report = run_benchmark(dataset, setups);
  write_report_files(report, o.out);
  if (report_out) *report_out = report;
  return report.failed_cells() == report.total_cells() ? static_cast<int>(ErrorKind::backend) : 0;
}

void cmd_normalize(const NormalizeOptions& o) {
  if (o.input.empty() || o.reference.empty() || (o.out.empty() && o.output.empty()))
    throw_usage("normalize requires --input, --reference and --output or --out");
  const Config cfg = load_config(o.config, o.seed);
  const PipelineConfig p = pipeline_config_from(cfg, Strategy::prompt);
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_manifest({"normalize",
                    o.config,
                    {cfg.dump()},
                    p.normalize.fit.seed,
                    o.out,
                    {{"input", o.input.string()}, {"reference", o.reference.string()}}},
                   o.out / "manifest.json");
  }
  const Image source = load_image(o.input);
  const Image reference = load_image(o.reference);
  NormalizeDiagnostics diag;
  const Image normalized = normalize_to_reference(source, reference, p.normalize, &diag);
  if (!o.output.empty()) save_image(normalized, o.output);
  if (o.out.empty()) return;
  save_image(normalized, o.out / "normalized.png");
  save_stain_model(diag.reference, p.normalize.fit, o.out / "reference.stain");
  if (!diag.source.concentrations.empty()) save_stain_model(diag.source, p.normalize.fit, o.out / "source.stain");
}

void cmd_slic(const SlicOptions& o) {
  if (o.input.empty() || o.out.empty()) throw_usage("slic requires --input and --out");
  if (o.resolution_factor < 1) throw_usage("--factor must be >= 1");
  const Config cfg = load_config(o.config, std::nullopt);
  PipelineConfig p = pipeline_config_from(cfg, Strategy::superpixel);
  if (o.k_target) p.slic.k_target = *o.k_target;
  if (o.compactness) p.slic.compactness = *o.compactness;
  if (p.slic.k_target < 1) throw_usage("--k must be >= 1");
  fs::create_directories(o.out);
  write_manifest({"slic",
                  o.config,
                  {format_pipeline_config(p)},
                  0,
                  o.out,
                  {{"input", o.input.string()}, {"factor", std::to_string(o.resolution_factor)}}},
                 o.out / "manifest.json");
  const Image work = downsample(load_image(o.input), o.resolution_factor);
  const SuperpixelMap map = slic(work, p.slic);
  save_superpixel_map(map, o.out / "labels.wspx");
  save_feature_matrix(aggregate_features(work, map, ReferenceExtractor{}), o.out / "features.wsfb");
  Mask boundary(map.width, map.height);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) {
      const auto l = map.at(x, y);
      if ((x + 1 < map.width && map.at(x + 1, y) != l) || (y + 1 < map.height && map.at(x, y + 1) != l))
        boundary.set(x, y, 1);
    }
  save_image(render_overlay(work, boundary, Rgb{255, 255, 0}, 1.0), o.out / "boundaries.png");
}

}  // namespace wsib::cli
