#include "wsib/stain.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "wsib/color.hpp"
#include "wsib/error.hpp"

namespace wsib {
namespace {

using Matrix3X = Eigen::Matrix<double, 3, Eigen::Dynamic>;
using Matrix2X = Eigen::Matrix<double, 2, Eigen::Dynamic>;
using Matrix32 = Eigen::Matrix<double, 3, 2>;

constexpr double kTiny = 1e-12;
constexpr int kInnerH = 30;

Matrix3X to_matrix(const ODMatrix& od) {
  Matrix3X v(3, static_cast<Eigen::Index>(od.size()));
  for (std::size_t i = 0; i < od.size(); ++i)
    for (int c = 0; c < 3; ++c) v(c, static_cast<Eigen::Index>(i)) = od.rows[i][c];
  return v;
}

void normalize_columns(Matrix32& w) {
  for (int k = 0; k < 2; ++k) {
    w.col(k) = w.col(k).cwiseMax(0.0);
    const double n = w.col(k).norm();
    if (n > kTiny) w.col(k) /= n;
  }
}

double objective(const Matrix3X& v, const Matrix32& w, const Matrix2X& h, double lambda) {
  return (v - w * h).squaredNorm() + lambda * h.sum();
}

Eigen::Vector3d unit(const Eigen::Vector3d& v) {
  const double n = v.norm();
  return n > kTiny ? Eigen::Vector3d(v / n) : v;
}

// Stain directions at the angular extremes of the OD cloud, measured in the
// plane of its two dominant principal directions.
Matrix32 initial_stains(const Matrix3X& v, double percentile) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < v.cols(); ++i)
    if (v.col(i).norm() > 0.05) rows.push_back(i);
  if (rows.size() < 2) {
    rows.clear();
    for (Eigen::Index i = 0; i < v.cols(); ++i)
      if (v.col(i).norm() > kTiny) rows.push_back(i);
  }
  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (auto i : rows) scatter += v.col(i) * v.col(i).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
  Eigen::Vector3d e1 = eig.eigenvectors().col(2);
  Eigen::Vector3d e2 = eig.eigenvectors().col(1);
  if (e1.sum() < 0) e1 = -e1;
  if (e2(2) < 0) e2 = -e2;

  std::vector<std::pair<double, Eigen::Index>> angles;
  angles.reserve(rows.size());
  for (auto i : rows) angles.emplace_back(std::atan2(v.col(i).dot(e2), v.col(i).dot(e1)), i);
  std::sort(angles.begin(), angles.end());
  const auto pick = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::clamp(q / 100.0 * (angles.size() - 1), 0.0, angles.size() - 1.0));
    return angles[idx];
  };
  const auto lo = pick(percentile);
  const auto hi = pick(100.0 - percentile);

  Matrix32 w;
  w.col(0) = unit(v.col(lo.second).cwiseMax(0.0));
  w.col(1) = unit(v.col(hi.second).cwiseMax(0.0));
  if (hi.first - lo.first < 1e-3) {
    // One stain only: complement with the axis least aligned to it.
    Eigen::Index axis = 0;
    w.col(0).minCoeff(&axis);
    Eigen::Vector3d other = Eigen::Vector3d::Unit(axis) - w.col(0) * w(axis, 0);
    w.col(1) = unit(other.cwiseMax(0.0));
  }
  w = w.array() + 1e-4;
  normalize_columns(w);
  return w;
}

std::array<double, 2> nnls2(const Matrix32& w, const Eigen::Vector3d& v) {
  const double g00 = w.col(0).squaredNorm(), g11 = w.col(1).squaredNorm(), g01 = w.col(0).dot(w.col(1));
  const double r0 = w.col(0).dot(v), r1 = w.col(1).dot(v);
  const double det = g00 * g11 - g01 * g01;
  if (det > 1e-12 * g00 * g11) {
    const double c0 = (g11 * r0 - g01 * r1) / det;
    const double c1 = (g00 * r1 - g01 * r0) / det;
    if (c0 >= 0.0 && c1 >= 0.0) return {c0, c1};
  }
  const double a = g00 > kTiny ? std::max(0.0, r0 / g00) : 0.0;
  const double b = g11 > kTiny ? std::max(0.0, r1 / g11) : 0.0;
  const double ra = (v - w.col(0) * a).squaredNorm();
  const double rb = (v - w.col(1) * b).squaredNorm();
  return ra <= rb ? std::array<double, 2>{a, 0.0} : std::array<double, 2>{0.0, b};
}

Matrix32 to_eigen(const std::array<std::array<double, 3>, 2>& stains) {
  Matrix32 w;
  for (int k = 0; k < 2; ++k)
    for (int c = 0; c < 3; ++c) w(c, k) = stains[k][c];
  return w;
}

double percentile_of(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  const auto idx = static_cast<std::size_t>(std::clamp(q / 100.0 * (values.size() - 1), 0.0, values.size() - 1.0));
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(idx), values.end());
  return values[idx];
}

ODMatrix subsample(const ODMatrix& od, std::size_t max_rows) {
  if (max_rows == 0 || od.size() <= max_rows) return od;
  const std::size_t step = (od.size() + max_rows - 1) / max_rows;
  ODMatrix out;
  for (std::size_t i = 0; i < od.size(); i += step) {
    out.rows.push_back(od.rows[i]);
    out.pixels.push_back(od.pixels[i]);
  }
  return out;
}

}  // namespace

double optical_density(int intensity) noexcept { return -std::log10((intensity + 1.0) / 256.0); }

Mask tissue_mask(const Image& image, double background_fraction) {
  Mask out(image.width(), image.height());
  const double limit = background_fraction * 255.0;
  auto dst = out.data();
  const auto n = static_cast<std::ptrdiff_t>(image.pixel_count());
  const auto src = image.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    dst[i] = luminance({src[3 * i], src[3 * i + 1], src[3 * i + 2]}) > limit ? 0 : 1;
  return out;
}

ODMatrix to_optical_density(const Image& image, const Mask& tissue) {
  require_same_dims(image, tissue, "to_optical_density");
  ODMatrix od;
  const auto src = image.data();
  const auto m = tissue.data();
  for (std::size_t i = 0; i < image.pixel_count(); ++i) {
    if (!m[i]) continue;
    od.rows.push_back({optical_density(src[3 * i]), optical_density(src[3 * i + 1]), optical_density(src[3 * i + 2])});
    od.pixels.push_back(static_cast<std::uint32_t>(i));
  }
  if (od.rows.empty()) throw_data("to_optical_density: no tissue pixels");
  return od;
}

StainModel fit_stain_model(const ODMatrix& od, const StainFitConfig& cfg) {
  if (cfg.iterations < 0) throw_usage("stain fit iterations must be >= 0");
  if (cfg.lambda < 0.0) throw_usage("stain fit lambda must be >= 0");
  const Matrix3X v = to_matrix(od);
  if (v.cols() < 2 || v.squaredNorm() <= kTiny) throw_data("fit_stain_model: degenerate optical density (rank 0)");
  bool distinct = false;
  for (Eigen::Index i = 1; i < v.cols() && !distinct; ++i) distinct = (v.col(i) - v.col(0)).squaredNorm() > kTiny;
  if (!distinct) throw_data("fit_stain_model: need at least two distinct optical density rows");

  Matrix32 w = initial_stains(v, cfg.extreme_percentile);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit_dist(0.5, 1.5);
  const double scale = v.colwise().norm().mean();
  Matrix2X h(2, v.cols());
  for (Eigen::Index i = 0; i < h.cols(); ++i) {
    h(0, i) = unit_dist(rng) * scale;
    h(1, i) = unit_dist(rng) * scale;
  }

  StainModel model;
  double f = objective(v, w, h, cfg.lambda);
  model.objective.push_back(f);
  for (int it = 0; it < cfg.iterations; ++it) {
    // Concentrations: multiplicative update with the L1 term in the denominator.
    const Eigen::Matrix<double, 2, Eigen::Dynamic> numer = w.transpose() * v;
    const Eigen::Matrix2d gram = w.transpose() * w;
    for (int inner = 0; inner < kInnerH; ++inner) {
      Matrix2X h_next =
          h.cwiseProduct(numer.cwiseQuotient(((gram * h).array() + cfg.lambda / 2.0).max(kTiny).matrix()));
      const double fh = objective(v, w, h_next, cfg.lambda);
      if (!(fh <= f)) break;
      h = std::move(h_next);
      f = fh;
    }

    // Stain colors: multiplicative step, renormalized, accepted only if it
    // does not increase the objective (backtracking toward the current W).
    const Matrix32 vht = v * h.transpose();
    const Matrix32 whht = w * (h * h.transpose());
    Matrix32 step = w.cwiseProduct(vht.cwiseQuotient(whht.cwiseMax(kTiny)));
    normalize_columns(step);
    for (double tau = 1.0; tau >= 1.0 / 16.0; tau /= 2.0) {
      Matrix32 cand = (1.0 - tau) * w + tau * step;
      normalize_columns(cand);
      if (const double fw = objective(v, cand, h, cfg.lambda); fw <= f) {
        w = cand;
        f = fw;
        break;
      }
    }
    model.objective.push_back(f);
  }

  if (w(2, 0) < w(2, 1)) {
    w.col(0).swap(w.col(1));
    h.row(0).swap(h.row(1));
  }
  for (int k = 0; k < 2; ++k)
    for (int c = 0; c < 3; ++c) model.stains[k][c] = w(c, k);
  model.concentrations.resize(static_cast<std::size_t>(h.cols()));
  for (Eigen::Index i = 0; i < h.cols(); ++i) model.concentrations[i] = {h(0, i), h(1, i)};
  return model;
}

double stain_objective(const ODMatrix& od, const StainModel& model, double lambda) {
  if (model.concentrations.size() != od.size()) throw_data("stain_objective: concentration count mismatch");
  Matrix2X h(2, static_cast<Eigen::Index>(od.size()));
  for (std::size_t i = 0; i < od.size(); ++i) {
    h(0, i) = model.concentrations[i][0];
    h(1, i) = model.concentrations[i][1];
  }
  return objective(to_matrix(od), to_eigen(model.stains), h, lambda);
}

std::vector<std::array<double, 2>> stain_concentrations(const std::array<std::array<double, 3>, 2>& stains,
                                                        const ODMatrix& od) {
  const Matrix32 w = to_eigen(stains);
  std::vector<std::array<double, 2>> out(od.size());
  const auto n = static_cast<std::ptrdiff_t>(od.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[i] = nnls2(w, Eigen::Vector3d(od.rows[i][0], od.rows[i][1], od.rows[i][2]));
  return out;
}

Image normalize_to_reference(const Image& source, const Image& reference, const NormalizeConfig& cfg,
                             NormalizeDiagnostics* diagnostics) {
  const Mask src_tissue = tissue_mask(source, cfg.background_fraction);
  if (src_tissue.count() == 0) return source;
  const Mask ref_tissue = tissue_mask(reference, cfg.background_fraction);
  if (ref_tissue.count() == 0) throw_data("normalize_to_reference: reference image contains no tissue");

  const ODMatrix od_src = to_optical_density(source, src_tissue);
  const ODMatrix od_ref = to_optical_density(reference, ref_tissue);
  StainModel model_src = fit_stain_model(subsample(od_src, cfg.max_fit_pixels), cfg.fit);
  StainModel model_ref = fit_stain_model(subsample(od_ref, cfg.max_fit_pixels), cfg.fit);

  const auto c_src = stain_concentrations(model_src.stains, od_src);
  const auto c_ref = stain_concentrations(model_ref.stains, od_ref);
  std::array<double, 2> scale{1.0, 1.0};
  for (int k = 0; k < 2; ++k) {
    std::vector<double> s(c_src.size()), r(c_ref.size());
    std::transform(c_src.begin(), c_src.end(), s.begin(), [k](const auto& c) { return c[k]; });
    std::transform(c_ref.begin(), c_ref.end(), r.begin(), [k](const auto& c) { return c[k]; });
    const double ps = percentile_of(std::move(s), cfg.percentile);
    const double pr = percentile_of(std::move(r), cfg.percentile);
    scale[k] = ps > 1e-9 ? pr / ps : 1.0;
  }

  Image out = source;
  auto dst = out.data();
  const auto& wr = model_ref.stains;
  const auto n = static_cast<std::ptrdiff_t>(od_src.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double h0 = c_src[i][0] * scale[0];
    const double h1 = c_src[i][1] * scale[1];
    const std::size_t p = od_src.pixels[i];
    for (int c = 0; c < 3; ++c) {
      const double od = wr[0][c] * h0 + wr[1][c] * h1;
      const double v = 256.0 * std::pow(10.0, -od) - 1.0;
      dst[3 * p + c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  if (diagnostics) *diagnostics = {std::move(model_src), std::move(model_ref), scale};
  return out;
}

double angle_degrees(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const Eigen::Vector3d u(a[0], a[1], a[2]), v(b[0], b[1], b[2]);
  const double c = std::clamp(u.dot(v) / std::max(kTiny, u.norm() * v.norm()), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

double max_stain_angle(const StainModel& a, const StainModel& b) {
  const double direct = std::max(angle_degrees(a.stains[0], b.stains[0]), angle_degrees(a.stains[1], b.stains[1]));
  const double swapped = std::max(angle_degrees(a.stains[0], b.stains[1]), angle_degrees(a.stains[1], b.stains[0]));
  return std::min(direct, swapped);
}

void save_stain_model(const StainModel& model, const StainFitConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw_data(fmt::format("{}: cannot open for writing", path.string()));
  out << fmt::format("{:.9g} {:.9g} {:.9g} {:.9g} {:.9g} {:.9g}\n", model.stains[0][0], model.stains[0][1],
                     model.stains[0][2], model.stains[1][0], model.stains[1][1], model.stains[1][2]);
  out << fmt::format("# stains=2 lambda={} iterations={} seed={} rows={} objective={:.9g}\n", cfg.lambda,
                     cfg.iterations, cfg.seed, model.concentrations.size(),
                     model.objective.empty() ? 0.0 : model.objective.back());
  if (!out) throw_data(fmt::format("{}: write failed", path.string()));
}

StainModel load_stain_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_data(fmt::format("{}: cannot open", path.string()));
  StainModel model;
  for (int k = 0; k < 2; ++k)
    for (int c = 0; c < 3; ++c)
      if (!(in >> model.stains[k][c])) throw_data(fmt::format("{}: expected 6 stain coefficients", path.string()));
  return model;
}

}  // namespace wsib
