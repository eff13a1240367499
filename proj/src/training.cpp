#include "wsib/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "binary_io.hpp"
#include "wsib/error.hpp"

namespace wsib {
namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;
};

Standardizer fit_standardizer(const Dataset& data, std::span<const std::size_t> rows) {
  Standardizer s{std::vector<double>(data.dim, 0.0), std::vector<double>(data.dim, 1.0)};
  for (auto r : rows)
    for (std::size_t j = 0; j < data.dim; ++j) s.mean[j] += data.row(r)[j];
  for (auto& m : s.mean) m /= static_cast<double>(rows.size());
  std::vector<double> var(data.dim, 0.0);
  for (auto r : rows)
    for (std::size_t j = 0; j < data.dim; ++j) {
      const double d = data.row(r)[j] - s.mean[j];
      var[j] += d * d;
    }
  for (std::size_t j = 0; j < data.dim; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(rows.size()));
    s.scale[j] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

// Rewrites the first layer so the model accepts raw (unstandardized) inputs.
void fold_standardizer(ModelParams& model, const Standardizer& s) {
  const std::size_t in = model.layers[0];
  const std::size_t out = model.layers[1];
  double* w = model.values.data();
  double* b = w + in * out;
  for (std::size_t o = 0; o < out; ++o) {
    double shift = 0.0;
    for (std::size_t j = 0; j < in; ++j) {
      w[o * in + j] /= s.scale[j];
      shift += w[o * in + j] * s.mean[j];
    }
    b[o] -= shift;
  }
}

}  // namespace

BceResult bce_loss(double p, int y) noexcept {
  const double pc = std::clamp(p, kBceEpsilon, 1.0 - kBceEpsilon);
  if (y) return {-std::log(pc), -1.0 / pc};
  return {-std::log(1.0 - pc), 1.0 / (1.0 - pc)};
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw_usage("learning_rate must be > 0");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw_usage("val_fraction must lie in (0, 1)");
  if (patience < 1) throw_usage("patience must be >= 1");
  if (max_epochs < 1) throw_usage("max_epochs must be >= 1");
  if (batch_size < 1) throw_usage("batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw_usage("Adam betas must lie in [0, 1)");
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, std::uint64_t t,
               const TrainConfig& cfg) {
  if (grads.size() != params.size())
    throw_data(fmt::format("adam_step: {} gradients for {} parameters", grads.size(), params.size()));
  if (t < 1) throw_usage("adam_step: step counter must start at 1");
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw_data("adam_step: optimizer state does not match parameter count");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

std::size_t ModelParams::parameter_count(std::span<const std::uint32_t> layers) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) n += static_cast<std::size_t>(layers[i]) * layers[i + 1] + layers[i + 1];
  return n;
}

ModelParams ModelParams::zeros(ModelKind kind, std::size_t input_dim, std::size_t hidden) {
  ModelParams m;
  m.layers = kind == ModelKind::linear
                 ? std::vector<std::uint32_t>{static_cast<std::uint32_t>(input_dim), 1}
                 : std::vector<std::uint32_t>{static_cast<std::uint32_t>(input_dim), static_cast<std::uint32_t>(hidden), 1};
  m.values.assign(parameter_count(m.layers), 0.0);
  return m;
}

ModelKind ModelParams::kind() const { return layers.size() == 2 ? ModelKind::linear : ModelKind::mlp; }

void ModelParams::validate() const {
  if (layers.size() != 2 && layers.size() != 3) throw_data(fmt::format("model: unsupported depth {}", layers.size()));
  if (layers.back() != 1) throw_data("model: output layer must have one unit");
  if (std::find(layers.begin(), layers.end(), 0u) != layers.end()) throw_data("model: empty layer");
  if (values.size() != parameter_count(layers))
    throw_data(fmt::format("model: {} parameters, architecture needs {}", values.size(), parameter_count(layers)));
  if (!std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); }))
    throw_data("model: non-finite parameter");
}

double predict_probability(const ModelParams& model, std::span<const double> x) {
  const std::size_t in = model.layers[0];
  if (x.size() != in) throw_backend(fmt::format("model expects {} features, got {}", in, x.size()));
  const double* w = model.values.data();
  if (model.layers.size() == 2) {
    double z = w[in];
    for (std::size_t j = 0; j < in; ++j) z += w[j] * x[j];
    return sigmoid(z);
  }
  const std::size_t hidden = model.layers[1];
  const double* b1 = w + hidden * in;
  const double* w2 = b1 + hidden;
  double z = w2[hidden];
  for (std::size_t h = 0; h < hidden; ++h) {
    double a = b1[h];
    const double* row = w + h * in;
    for (std::size_t j = 0; j < in; ++j) a += row[j] * x[j];
    z += w2[h] * std::tanh(a);
  }
  return sigmoid(z);
}

double loss_and_gradient(const ModelParams& model, std::span<const double> x, int y, std::span<double> grad) {
  const std::size_t in = model.layers[0];
  const double* w = model.values.data();
  if (model.layers.size() == 2) {
    double z = w[in];
    for (std::size_t j = 0; j < in; ++j) z += w[j] * x[j];
    const double p = sigmoid(z);
    const auto [loss, dp] = bce_loss(p, y);
    const double dz = dp * p * (1.0 - p);
    for (std::size_t j = 0; j < in; ++j) grad[j] += dz * x[j];
    grad[in] += dz;
    return loss;
  }
  const std::size_t hidden = model.layers[1];
  const double* b1 = w + hidden * in;
  const double* w2 = b1 + hidden;
  thread_local std::vector<double> act;
  act.resize(hidden);
  double z = w2[hidden];
  for (std::size_t h = 0; h < hidden; ++h) {
    double a = b1[h];
    const double* row = w + h * in;
    for (std::size_t j = 0; j < in; ++j) a += row[j] * x[j];
    act[h] = std::tanh(a);
    z += w2[h] * act[h];
  }
  const double p = sigmoid(z);
  const auto [loss, dp] = bce_loss(p, y);
  const double dz = dp * p * (1.0 - p);
  double* g_w1 = grad.data();
  double* g_b1 = g_w1 + hidden * in;
  double* g_w2 = g_b1 + hidden;
  for (std::size_t h = 0; h < hidden; ++h) {
    g_w2[h] += dz * act[h];
    const double da = dz * w2[h] * (1.0 - act[h] * act[h]);
    g_b1[h] += da;
    double* row = g_w1 + h * in;
    for (std::size_t j = 0; j < in; ++j) row[j] += da * x[j];
  }
  g_w2[hidden] += dz;
  return loss;
}

void Dataset::add(std::span<const double> x, std::uint8_t label) {
  if (dim == 0 && labels.empty()) dim = x.size();
  if (x.size() != dim) throw_data(fmt::format("dataset: sample has {} features, expected {}", x.size(), dim));
  features.insert(features.end(), x.begin(), x.end());
  labels.push_back(label ? 1 : 0);
}

TrainResult train_classifier(const Dataset& data, const Architecture& arch, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw_data("train_classifier: empty dataset");
  if (data.size() < 5) throw_data(fmt::format("train_classifier: need at least 5 samples, got {}", data.size()));
  const auto positives = static_cast<std::size_t>(std::count(data.labels.begin(), data.labels.end(), 1));
  if (positives == 0 || positives == data.size())
    throw_data("train_classifier: labels are all identical; need both classes");
  if (!std::all_of(data.features.begin(), data.features.end(), [](double v) { return std::isfinite(v); }))
    throw_data("train_classifier: non-finite feature value");

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(data.size()))), 1, data.size() - 1);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  const Standardizer standardizer = fit_standardizer(data, train);
  Dataset scaled{data.dim, data.features, data.labels};
  for (std::size_t i = 0; i < scaled.size(); ++i)
    for (std::size_t j = 0; j < data.dim; ++j) {
      double& v = scaled.features[i * data.dim + j];
      v = (v - standardizer.mean[j]) / standardizer.scale[j];
    }

  ModelParams model = ModelParams::zeros(arch.kind, data.dim, arch.hidden);
  if (arch.kind == ModelKind::mlp) {
    const std::size_t in = data.dim, hidden = arch.hidden;
    const double a1 = std::sqrt(6.0 / static_cast<double>(in + hidden));
    const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + 1));
    std::uniform_real_distribution<double> u1(-a1, a1), u2(-a2, a2);
    for (std::size_t i = 0; i < hidden * in; ++i) model.values[i] = u1(rng);
    double* w2 = model.values.data() + hidden * in + hidden;
    for (std::size_t h = 0; h < hidden; ++h) w2[h] = u2(rng);
  }

  TrainResult result;
  result.train_size = train.size();
  result.val_size = val.size();
  result.val_indices = val;
  ModelParams best = model;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  AdamState state;
  std::uint64_t step = 0;
  std::vector<double> grad(model.values.size());

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double train_loss = 0.0;
    for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(train.size(), start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = start; i < end; ++i)
        train_loss += loss_and_gradient(model, scaled.row(train[i]), scaled.labels[train[i]], grad);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (double& g : grad) g *= inv;
      adam_step(model.values, grad, state, ++step, cfg);
    }
    double val_loss = 0.0;
    for (auto i : val) val_loss += bce_loss(predict_probability(model, scaled.row(i)), scaled.labels[i]).loss;
    val_loss /= static_cast<double>(val.size());
    result.log.push_back({epoch, train_loss / static_cast<double>(train.size()), val_loss});
    result.stop_epoch = epoch;

    if (val_loss < best_val) {
      best_val = val_loss;
      best = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }

  fold_standardizer(best, standardizer);
  result.model = std::move(best);
  result.best_val_loss = best_val;
  return result;
}

void save_model(const ModelParams& model, const std::filesystem::path& path) {
  model.validate();
  detail::LeWriter out(path);
  out.magic("WSMP");
  out.u32(1);
  out.u32(static_cast<std::uint32_t>(model.layers.size()));
  for (auto l : model.layers) out.u32(l);
  out.u64(model.values.size());
  for (double v : model.values) out.f32(static_cast<float>(v));
  out.finish();
}

ModelParams load_model(const std::filesystem::path& path) {
  detail::LeReader in(path);
  in.expect_magic("WSMP");
  if (const auto version = in.u32(); version != 1)
    throw_data(fmt::format("{}: unsupported WSMP version {}", path.string(), version));
  ModelParams model;
  const auto depth = in.u32();
  if (depth < 2 || depth > 8) throw_data(fmt::format("{}: implausible layer count {}", path.string(), depth));
  model.layers.resize(depth);
  for (auto& l : model.layers) l = in.u32();
  const auto count = in.u64();
  if (count != ModelParams::parameter_count(model.layers))
    throw_data(fmt::format("{}: parameter count {} disagrees with architecture", path.string(), count));
  model.values.resize(count);
  for (auto& v : model.values) v = in.f32();
  in.expect_end();
  model.validate();
  return model;
}

}  // namespace wsib
