#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace wsib {

inline constexpr double kBceEpsilon = 1e-7;

struct BceResult {
  double loss = 0.0;
  double grad = 0.0;  ///< dL/dp at the clamped probability
};

/// Binary cross-entropy with p clamped to [1e-7, 1 - 1e-7].
BceResult bce_loss(double p, int y) noexcept;

struct TrainConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  int max_epochs = 300;
  int patience = 15;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
};

/// One bias-corrected Adam update at step t >= 1.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, std::uint64_t t,
               const TrainConfig& cfg);

enum class ModelKind { linear, mlp };

/// Flat parameters: per layer a row-major (out x in) weight block then the
/// bias vector. `layers` is {in, 1} for linear and {in, hidden, 1} for the
/// tanh MLP; the output is a sigmoid probability.
struct ModelParams {
  std::vector<std::uint32_t> layers;
  std::vector<double> values;

  static ModelParams zeros(ModelKind kind, std::size_t input_dim, std::size_t hidden = 64);
  static std::size_t parameter_count(std::span<const std::uint32_t> layers);

  ModelKind kind() const;
  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front(); }
  void validate() const;

  bool operator==(const ModelParams&) const = default;
};

double predict_probability(const ModelParams& model, std::span<const double> x);

/// BCE loss of one sample; accumulates dL/dtheta into `grad`.
double loss_and_gradient(const ModelParams& model, std::span<const double> x, int y, std::span<double> grad);

struct Dataset {
  std::size_t dim = 0;
  std::vector<double> features;  ///< row-major, size() x dim
  std::vector<std::uint8_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
  void add(std::span<const double> x, std::uint8_t label);
};

struct Architecture {
  ModelKind kind = ModelKind::mlp;
  std::size_t hidden = 64;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ModelParams model;  ///< parameters of the best validation epoch, input standardization folded in
  std::vector<EpochLog> log;
  int best_epoch = 0;
  int stop_epoch = 0;
  bool early_stopped = false;
  double best_val_loss = 0.0;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
  std::vector<std::size_t> val_indices;
};

/// Seeded train/validation split, minibatch Adam on BCE, early stopping once
/// validation loss has not improved for `patience` epochs.
TrainResult train_classifier(const Dataset& data, const Architecture& arch, const TrainConfig& cfg);

/// "WSMP" v1: layer count, layer sizes (u32), parameter count (u64), float32 values.
void save_model(const ModelParams& model, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace wsib
