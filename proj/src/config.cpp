#include "wsib/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "wsib/error.hpp"

namespace wsib {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
std::optional<T> parse_number(const std::string& text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return v;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  return parts;
}

}  // namespace

Config Config::parse(const std::string& text, std::string source) {
  Config cfg;
  cfg.source_ = std::move(source);
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    if (const auto c = s.find_first_of("#;"); c != std::string::npos) s.erase(c);
    s = trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw_usage(fmt::format("{}:{}: unterminated section header", cfg.source_, line));
      section = trim(std::string_view(s).substr(1, s.size() - 2));
      if (section.empty()) throw_usage(fmt::format("{}:{}: empty section name", cfg.source_, line));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw_usage(fmt::format("{}:{}: expected 'key = value'", cfg.source_, line));
    const std::string key = trim(std::string_view(s).substr(0, eq));
    std::string value = trim(std::string_view(s).substr(eq + 1));
    if (key.empty()) throw_usage(fmt::format("{}:{}: missing key", cfg.source_, line));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    auto& sec = cfg.values_[section];
    if (sec.count(key))
      throw_usage(fmt::format("{}:{}: duplicate key '{}' (first set on line {})", cfg.source_, line, key, sec[key].line));
    sec[key] = {std::move(value), line};
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_data(fmt::format("{}: cannot open config file", path.string()));
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), path.string());
}

bool Config::has(const std::string& section, const std::string& key) const { return find(section, key) != nullptr; }

const Config::Entry* Config::find(const std::string& section, const std::string& key) const {
  const auto s = values_.find(section);
  if (s == values_.end()) return nullptr;
  const auto k = s->second.find(key);
  return k == s->second.end() ? nullptr : &k->second;
}

void Config::set(const std::string& section, const std::string& key, std::string value) {
  values_[section][key] = {std::move(value), 0};
}

std::string Config::where(const std::string& section, const std::string& key) const {
  const auto* e = find(section, key);
  const std::string name = section.empty() ? key : section + "." + key;
  if (e && e->line > 0) return fmt::format("{}:{}: {}", source_, e->line, name);
  return fmt::format("{}: {}", source_, name);
}

std::string Config::get_string(const std::string& section, const std::string& key, const std::string& fallback) const {
  const auto* e = find(section, key);
  return e ? e->value : fallback;
}

int Config::get_int(const std::string& section, const std::string& key, int fallback) const {
  const auto* e = find(section, key);
  if (!e) return fallback;
  const auto v = parse_number<int>(e->value);
  if (!v) throw_usage(fmt::format("{}: '{}' is not an integer", where(section, key), e->value));
  return *v;
}

std::uint64_t Config::get_u64(const std::string& section, const std::string& key, std::uint64_t fallback) const {
  const auto* e = find(section, key);
  if (!e) return fallback;
  const auto v = parse_number<std::uint64_t>(e->value);
  if (!v) throw_usage(fmt::format("{}: '{}' is not a non-negative integer", where(section, key), e->value));
  return *v;
}

double Config::get_double(const std::string& section, const std::string& key, double fallback) const {
  const auto* e = find(section, key);
  if (!e) return fallback;
  const auto v = parse_number<double>(e->value);
  if (!v) throw_usage(fmt::format("{}: '{}' is not a number", where(section, key), e->value));
  return *v;
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  const auto* e = find(section, key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
  if (e->value == "false" || e->value == "0" || e->value == "no") return false;
  throw_usage(fmt::format("{}: '{}' is not a boolean", where(section, key), e->value));
}

std::vector<int> Config::get_int_list(const std::string& section, const std::string& key,
                                      std::vector<int> fallback) const {
  const auto* e = find(section, key);
  if (!e) return fallback;
  std::vector<int> out;
  for (const auto& part : split_list(e->value)) {
    const auto v = parse_number<int>(part);
    if (!v) throw_usage(fmt::format("{}: '{}' is not an integer list", where(section, key), e->value));
    out.push_back(*v);
  }
  return out;
}

void Config::require_known(const std::string& section, const std::vector<std::string>& allowed) const {
  const auto s = values_.find(section);
  if (s == values_.end()) return;
  for (const auto& [key, entry] : s->second)
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw_usage(fmt::format("{}: unknown key", where(section, key)));
}

std::vector<std::string> Config::sections() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : values_) out.push_back(name);
  return out;
}

std::string Config::dump() const {
  std::ostringstream out;
  for (const auto& [section, keys] : values_) {
    if (!section.empty()) out << '[' << section << "]\n";
    for (const auto& [key, entry] : keys) out << key << " = " << entry.value << '\n';
  }
  return out.str();
}

namespace {

Rgb parse_rgb(const Config& cfg, const std::string& section, const std::string& key, Rgb fallback) {
  const auto* e = cfg.find(section, key);
  if (!e) return fallback;
  const auto parts = split_list(e->value);
  Rgb c;
  std::uint8_t* dst[3] = {&c.r, &c.g, &c.b};
  bool ok = parts.size() == 3;
  for (std::size_t i = 0; ok && i < 3; ++i) {
    const auto v = parse_number<int>(parts[i]);
    ok = v && *v >= 0 && *v <= 255;
    if (ok) *dst[i] = static_cast<std::uint8_t>(*v);
  }
  if (!ok) throw_usage(fmt::format("{}: expected 'r, g, b' with components in [0, 255], got '{}'", cfg.where(section, key), e->value));
  return c;
}

Texture parse_texture(const Config& cfg, const std::string& section, Texture t) {
  cfg.require_known(section, {"color", "noise_amplitude", "stripe_frequency"});
  t.base = parse_rgb(cfg, section, "color", t.base);
  t.noise_amplitude = cfg.get_double(section, "noise_amplitude", t.noise_amplitude);
  t.stripe_frequency = cfg.get_double(section, "stripe_frequency", t.stripe_frequency);
  if (t.noise_amplitude < 0.0) throw_usage(fmt::format("{}: must be >= 0", cfg.where(section, "noise_amplitude")));
  if (t.stripe_frequency < 0.0) throw_usage(fmt::format("{}: must be >= 0", cfg.where(section, "stripe_frequency")));
  return t;
}

}  // namespace

SyntheticSpec synthetic_spec_from_config(const Config& cfg) {
  for (const auto& s : cfg.sections())
    if (s != "" && s != "tumor" && s != "background")
      throw_usage(fmt::format("{}: unknown section [{}]", cfg.source(), s));
  cfg.require_known("", {"width", "height", "blob_count", "blob_radius_min", "blob_radius_max", "edge_softness", "seed"});
  SyntheticSpec spec;
  spec.width = cfg.get_int("", "width", spec.width);
  spec.height = cfg.get_int("", "height", spec.height);
  spec.blob_count = cfg.get_int("", "blob_count", spec.blob_count);
  spec.blob_radius_min = cfg.get_double("", "blob_radius_min", spec.blob_radius_min);
  spec.blob_radius_max = cfg.get_double("", "blob_radius_max", spec.blob_radius_max);
  spec.edge_softness = cfg.get_double("", "edge_softness", spec.edge_softness);
  spec.seed = cfg.get_u64("", "seed", spec.seed);
  spec.tumor = parse_texture(cfg, "tumor", spec.tumor);
  spec.background = parse_texture(cfg, "background", spec.background);

  if (spec.width < 1) throw_usage(fmt::format("{}: must be >= 1", cfg.where("", "width")));
  if (spec.height < 1) throw_usage(fmt::format("{}: must be >= 1", cfg.where("", "height")));
  if (spec.blob_count < 0) throw_usage(fmt::format("{}: must be >= 0", cfg.where("", "blob_count")));
  if (!(spec.blob_radius_min > 0.0)) throw_usage(fmt::format("{}: must be > 0", cfg.where("", "blob_radius_min")));
  if (spec.blob_radius_max < spec.blob_radius_min)
    throw_usage(fmt::format("{}: must be >= blob_radius_min", cfg.where("", "blob_radius_max")));
  const double limit = std::min(spec.width, spec.height) / 2.0;
  if (spec.blob_radius_max >= limit)
    throw_usage(fmt::format("{}: {} does not fit the {}x{} image (must be < {})", cfg.where("", "blob_radius_max"),
                            spec.blob_radius_max, spec.width, spec.height, limit));
  if (spec.edge_softness < 0.0) throw_usage(fmt::format("{}: must be >= 0", cfg.where("", "edge_softness")));
  try {
    validate(spec);
  } catch (const Error& e) {
    throw_usage(fmt::format("{}: {}", cfg.source(), e.what()));
  }
  return spec;
}

std::string format_synthetic_spec(const SyntheticSpec& spec) {
  const auto texture = [](const char* name, const Texture& t) {
    return fmt::format("[{}]\ncolor = {}, {}, {}\nnoise_amplitude = {}\nstripe_frequency = {}\n", name, t.base.r,
                       t.base.g, t.base.b, t.noise_amplitude, t.stripe_frequency);
  };
  return fmt::format(
      "width = {}\nheight = {}\nblob_count = {}\nblob_radius_min = {}\nblob_radius_max = {}\nedge_softness = {}\nseed = {}\n\n{}\n{}",
      spec.width, spec.height, spec.blob_count, spec.blob_radius_min, spec.blob_radius_max, spec.edge_softness,
      spec.seed, texture("tumor", spec.tumor), texture("background", spec.background));
}

TrainConfig train_config_from(const Config& cfg) {
  cfg.require_known("train", {"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "max_epochs", "patience",
                              "val_fraction", "hidden", "augment_copies", "max_pixels_per_slide"});
  TrainConfig t;
  t.learning_rate = cfg.get_double("train", "learning_rate", t.learning_rate);
  t.beta1 = cfg.get_double("train", "beta1", t.beta1);
  t.beta2 = cfg.get_double("train", "beta2", t.beta2);
  t.epsilon = cfg.get_double("train", "epsilon", t.epsilon);
  const int batch = cfg.get_int("train", "batch_size", static_cast<int>(t.batch_size));
  if (batch < 1) throw_usage(fmt::format("{}: must be >= 1", cfg.where("train", "batch_size")));
  t.batch_size = static_cast<std::size_t>(batch);
  t.max_epochs = cfg.get_int("train", "max_epochs", t.max_epochs);
  t.patience = cfg.get_int("train", "patience", t.patience);
  t.val_fraction = cfg.get_double("train", "val_fraction", t.val_fraction);
  t.seed = cfg.get_u64("", "seed", t.seed);
  try {
    t.validate();
  } catch (const Error& e) {
    throw_usage(fmt::format("{}: [train] {}", cfg.source(), e.what()));
  }
  return t;
}

AugmentConfig augment_config_from(const Config& cfg) {
  cfg.require_known("augment", {"quarter_turns", "hflip_p", "vflip_p", "brightness_delta", "elastic_p",
                                "elastic_alpha", "elastic_sigma"});
  AugmentConfig a;
  a.quarter_turns = cfg.get_int_list("augment", "quarter_turns", a.quarter_turns);
  a.hflip_p = cfg.get_double("augment", "hflip_p", a.hflip_p);
  a.vflip_p = cfg.get_double("augment", "vflip_p", a.vflip_p);
  a.brightness_delta = cfg.get_int("augment", "brightness_delta", a.brightness_delta);
  a.elastic_p = cfg.get_double("augment", "elastic_p", a.elastic_p);
  a.elastic_alpha = cfg.get_double("augment", "elastic_alpha", a.elastic_alpha);
  a.elastic_sigma = cfg.get_double("augment", "elastic_sigma", a.elastic_sigma);
  a.seed = cfg.get_u64("", "seed", a.seed);
  try {
    a.validate();
  } catch (const Error& e) {
    throw_usage(fmt::format("{}: [augment] {}", cfg.source(), e.what()));
  }
  return a;
}

PipelineConfig pipeline_config_from(const Config& cfg, Strategy strategy) {
  const std::string s = to_string(strategy);
  cfg.require_known(s, {"resolution_factor", "patch_size", "stride", "tissue_threshold", "threshold", "working_size",
                        "window", "backend", "input", "dense", "model", "endpoint", "prompt_image", "prompt_mask",
                        "input_dim"});
  cfg.require_known("slic", {"k_target", "compactness", "max_iter", "connectivity_min_frac"});
  cfg.require_known("stain", {"lambda", "iterations", "percentile", "max_fit_pixels"});
  PipelineConfig p = PipelineConfig::defaults(strategy);
  p.resolution_factor = cfg.get_int(s, "resolution_factor", p.resolution_factor);
  p.patch_size = cfg.get_int(s, "patch_size", p.patch_size);
  p.stride = cfg.get_int(s, "stride", cfg.has(s, "patch_size") && !cfg.has(s, "stride") && strategy == Strategy::patch
                                          ? p.patch_size
                                          : p.stride);
  p.tissue_threshold = cfg.get_double(s, "tissue_threshold", p.tissue_threshold);
  p.probability_threshold = cfg.get_double(s, "threshold", p.probability_threshold);
  p.prompt_working_size = cfg.get_int(s, "working_size", p.prompt_working_size);
  p.in_context.window = cfg.get_int(s, "window", p.in_context.window);
  p.slic.k_target = cfg.get_int("slic", "k_target", p.slic.k_target);
  p.slic.compactness = cfg.get_double("slic", "compactness", p.slic.compactness);
  p.slic.max_iter = cfg.get_int("slic", "max_iter", p.slic.max_iter);
  p.slic.connectivity_min_frac = cfg.get_double("slic", "connectivity_min_frac", p.slic.connectivity_min_frac);
  p.normalize.fit.lambda = cfg.get_double("stain", "lambda", p.normalize.fit.lambda);
  p.normalize.fit.iterations = cfg.get_int("stain", "iterations", p.normalize.fit.iterations);
  p.normalize.percentile = cfg.get_double("stain", "percentile", p.normalize.percentile);
  p.normalize.max_fit_pixels =
      static_cast<std::size_t>(cfg.get_u64("stain", "max_fit_pixels", p.normalize.max_fit_pixels));
  p.normalize.fit.seed = cfg.get_u64("", "seed", p.normalize.fit.seed);
  if (cfg.has(s, "backend")) p.backend.kind = parse_backend_kind(cfg.get_string(s, "backend", ""));
  if (cfg.has(s, "input")) p.backend.input_kind = parse_input_kind(cfg.get_string(s, "input", ""));
  p.backend.dense = cfg.get_bool(s, "dense", p.backend.dense);
  p.backend.input_dim = static_cast<std::size_t>(cfg.get_u64(s, "input_dim", p.backend.input_dim));
  if (cfg.has(s, "model")) p.backend.location = cfg.get_string(s, "model", "");
  if (cfg.has(s, "endpoint")) p.backend.location = cfg.get_string(s, "endpoint", "");
  if (cfg.has(s, "prompt_image")) p.prompt_image = cfg.get_string(s, "prompt_image", "");
  if (cfg.has(s, "prompt_mask")) p.prompt_mask = cfg.get_string(s, "prompt_mask", "");
  try {
    p.validate();
  } catch (const Error& e) {
    throw_usage(fmt::format("{}: [{}] {}", cfg.source(), s, e.what()));
  }
  return p;
}

std::string format_pipeline_config(const PipelineConfig& p) {
  return fmt::format(
      "[{}]\nresolution_factor = {}\npatch_size = {}\nstride = {}\ntissue_threshold = {}\nthreshold = {}\n"
      "working_size = {}\nwindow = {}\nbackend = {}\ninput = {}\ndense = {}\nlocation = {}\nprompt_image = {}\n"
      "prompt_mask = {}\nslic.k_target = {}\nslic.compactness = {}\nslic.max_iter = {}\n"
      "slic.connectivity_min_frac = {}\nstain.lambda = {}\nstain.iterations = {}\nstain.percentile = {}\n"
      "stain.max_fit_pixels = {}\nstain.seed = {}\n",
      to_string(p.strategy), p.resolution_factor, p.patch_size, p.stride, p.tissue_threshold, p.probability_threshold,
      p.prompt_working_size, p.in_context.window, to_string(p.backend.kind), to_string(p.backend.input_kind),
      p.backend.dense, p.backend.location.string(), p.prompt_image.string(), p.prompt_mask.string(), p.slic.k_target,
      p.slic.compactness, p.slic.max_iter, p.slic.connectivity_min_frac, p.normalize.fit.lambda,
      p.normalize.fit.iterations, p.normalize.percentile, p.normalize.max_fit_pixels, p.normalize.fit.seed);
}

}  // namespace wsib
