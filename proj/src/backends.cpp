#include "wsib/backends.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "wsib/error.hpp"
#include "wsib/features.hpp"
#include "wsib/tiling.hpp"

namespace wsib {
namespace {

[[noreturn]] void kind_mismatch(const BackendDescriptor& d, const char* call) {
  throw_backend(fmt::format("backend kind mismatch: {} backend with {} input does not support {}", to_string(d.kind),
                            to_string(d.input_kind), call));
}

}  // namespace

std::string to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::linear: return "linear";
    case BackendKind::mlp: return "mlp";
    case BackendKind::external: return "external";
    case BackendKind::nn_transfer: return "nn-transfer";
  }
  return "?";
}

std::string to_string(InputKind kind) {
  switch (kind) {
    case InputKind::feature_vector: return "feature-vector";
    case InputKind::image_patch: return "image-patch";
    case InputKind::image_pair: return "image-pair";
  }
  return "?";
}

BackendKind parse_backend_kind(const std::string& text) {
  if (text == "linear") return BackendKind::linear;
  if (text == "mlp") return BackendKind::mlp;
  if (text == "external") return BackendKind::external;
  if (text == "nn-transfer") return BackendKind::nn_transfer;
  throw_usage(fmt::format("unknown backend kind '{}'", text));
}

InputKind parse_input_kind(const std::string& text) {
  if (text == "feature-vector") return InputKind::feature_vector;
  if (text == "image-patch") return InputKind::image_patch;
  if (text == "image-pair") return InputKind::image_pair;
  throw_usage(fmt::format("unknown input kind '{}'", text));
}

void BackendDescriptor::validate() const {
  if (kind == BackendKind::nn_transfer && input_kind != InputKind::image_pair)
    throw_usage("nn-transfer backend requires image-pair input");
  if ((kind == BackendKind::linear || kind == BackendKind::mlp) && input_kind == InputKind::image_pair)
    throw_usage(fmt::format("{} backend cannot take image-pair input", to_string(kind)));
  if (dense && input_kind != InputKind::image_patch) throw_usage("dense backends require image-patch input");
}

double Backend::predict(std::span<const double>, const ItemRef&) const { kind_mismatch(descriptor(), "feature-vector prediction"); }
double Backend::predict(const Image&, const ItemRef&) const { kind_mismatch(descriptor(), "image-patch prediction"); }
ProbabilityMap Backend::predict_dense(const Image&, const ItemRef&) const { kind_mismatch(descriptor(), "dense prediction"); }
Mask Backend::in_context_predict(const Image&, const Mask&, const Image&, const InContextConfig&) const {
  kind_mismatch(descriptor(), "in-context prediction");
}

ModelBackend::ModelBackend(ModelParams model, InputKind input_kind, bool dense) : model_(std::move(model)) {
  model_.validate();
  descriptor_.kind = model_.kind() == ModelKind::linear ? BackendKind::linear : BackendKind::mlp;
  descriptor_.input_kind = input_kind;
  descriptor_.input_dim = model_.input_dim();
  descriptor_.dense = dense;
  descriptor_.validate();
  const std::size_t expected = dense ? kPixelFeatureDimension
                               : input_kind == InputKind::image_patch ? ReferenceExtractor::kDimension
                                                                      : model_.input_dim();
  if (model_.input_dim() != expected)
    throw_data(fmt::format("model takes {} inputs but this backend produces {}", model_.input_dim(), expected));
}

double ModelBackend::predict(std::span<const double> features, const ItemRef&) const {
  if (descriptor_.input_kind != InputKind::feature_vector) kind_mismatch(descriptor_, "feature-vector prediction");
  return predict_probability(model_, features);
}

double ModelBackend::predict(const Image& patch, const ItemRef&) const {
  if (descriptor_.input_kind != InputKind::image_patch || descriptor_.dense)
    kind_mismatch(descriptor_, "image-patch prediction");
  return predict_probability(model_, image_features(patch, ReferenceExtractor{}));
}

ProbabilityMap ModelBackend::predict_dense(const Image& tile, const ItemRef&) const {
  if (!descriptor_.dense) kind_mismatch(descriptor_, "dense prediction");
  const auto features = pixel_features(tile);
  ProbabilityMap out(tile.width(), tile.height());
  auto values = out.data();
  const auto n = static_cast<std::ptrdiff_t>(values.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    values[i] = predict_probability(
        model_, std::span<const double>(features.data() + i * kPixelFeatureDimension, kPixelFeatureDimension));
  return out;
}

NnTransferBackend::NnTransferBackend() {
  descriptor_.kind = BackendKind::nn_transfer;
  descriptor_.input_kind = InputKind::image_pair;
}

Mask NnTransferBackend::in_context_predict(const Image& prompt, const Mask& prompt_mask, const Image& query,
                                           const InContextConfig& cfg) const {
  return nn_transfer(prompt, prompt_mask, query, cfg);
}

namespace {

// Each window is described on its own, so its features do not depend on
// neighboring windows.
std::vector<double> window_features(const Image& image, const PatchGrid& grid) {
  const ReferenceExtractor extractor;
  const std::size_t dim = extractor.dimension();
  const int s = grid.patch_size;
  std::vector<double> out(grid.size() * dim);
  const auto n = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t w = 0; w < n; ++w) {
    const auto [ox, oy] = grid.origins[w];
    const auto f = image_features(crop(image, ox, oy, s, s), extractor);
    std::copy(f.begin(), f.end(), out.begin() + w * static_cast<std::ptrdiff_t>(dim));
  }
  return out;
}

}  // namespace

Mask nn_transfer(const Image& prompt, const Mask& prompt_mask, const Image& query, const InContextConfig& cfg) {
  require_same_dims(prompt, query, "nn-transfer prompt vs query");
  require_same_dims(prompt, prompt_mask, "nn-transfer prompt vs prompt mask");
  if (cfg.window < 1) throw_usage("nn-transfer window must be >= 1");
  const int window = std::min({cfg.window, prompt.width(), prompt.height()});
  const PatchGrid grid = make_grid(prompt.width(), prompt.height(), window, window);
  const std::size_t dim = ReferenceExtractor::kDimension;
  const std::size_t n = grid.size();

  std::vector<std::uint8_t> prompt_labels(n);
  for (std::size_t w = 0; w < n; ++w) {
    const auto [ox, oy] = grid.origins[w];
    std::size_t on = 0;
    for (int y = oy; y < oy + window; ++y)
      for (int x = ox; x < ox + window; ++x) on += prompt_mask.at(x, y);
    prompt_labels[w] = 2 * on >= static_cast<std::size_t>(window) * window ? 1 : 0;
  }
  if (std::all_of(prompt_labels.begin(), prompt_labels.end(), [&](auto v) { return v == prompt_labels[0]; }))
    return stitch_patch_labels(grid, std::vector<std::uint8_t>(n, prompt_labels[0]));

  auto pf = window_features(prompt, grid);
  auto qf = window_features(query, grid);
  for (std::size_t j = 0; j < dim; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::size_t w = 0; w < n; ++w) mean += pf[w * dim + j];
    mean /= static_cast<double>(n);
    for (std::size_t w = 0; w < n; ++w) var += (pf[w * dim + j] - mean) * (pf[w * dim + j] - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    const double inv = sd > 1e-12 ? 1.0 / sd : 0.0;
    for (std::size_t w = 0; w < n; ++w) {
      pf[w * dim + j] *= inv;
      qf[w * dim + j] *= inv;
    }
  }

  std::vector<std::uint8_t> labels(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t q = 0; q < count; ++q) {
    const double* a = qf.data() + q * dim;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_w = 0;
    for (std::size_t w = 0; w < n; ++w) {
      const double* b = pf.data() + w * dim;
      double d = 0.0;
      for (std::size_t j = 0; j < dim; ++j) d += (a[j] - b[j]) * (a[j] - b[j]);
      if (d < best) {
        best = d;
        best_w = w;
      }
    }
    labels[q] = prompt_labels[best_w];
  }
  return stitch_patch_labels(grid, labels);
}

std::unique_ptr<Backend> make_backend(const BackendDescriptor& descriptor, const ExternalOptions& options) {
  descriptor.validate();
  switch (descriptor.kind) {
    case BackendKind::linear:
    case BackendKind::mlp: {
      auto model = load_model(descriptor.location);
      if ((model.kind() == ModelKind::linear) != (descriptor.kind == BackendKind::linear))
        throw_data(fmt::format("{}: model architecture is not {}", descriptor.location.string(), to_string(descriptor.kind)));
      return std::make_unique<ModelBackend>(std::move(model), descriptor.input_kind, descriptor.dense);
    }
    case BackendKind::external:
      return std::make_unique<ExternalBackend>(descriptor.location, descriptor.input_kind, descriptor.dense, options);
    case BackendKind::nn_transfer: return std::make_unique<NnTransferBackend>();
  }
  throw_usage("unknown backend kind");
}

}  // namespace wsib
