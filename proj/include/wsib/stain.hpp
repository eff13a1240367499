#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "wsib/image.hpp"

namespace wsib {

/// Beer-Lambert optical density of an 8-bit intensity: -log10((I + 1) / 256),
/// so white maps to 0 and black to log10(256).
double optical_density(int intensity) noexcept;

/// Tissue pixels are those with Rec. 601 luma <= background_fraction * 255.
Mask tissue_mask(const Image& image, double background_fraction = 0.9);

/// OD rows of the tissue pixels, in raster order.
struct ODMatrix {
  std::vector<std::array<double, 3>> rows;
  std::vector<std::uint32_t> pixels;  ///< linear pixel index of each row

  std::size_t size() const noexcept { return rows.size(); }
};

ODMatrix to_optical_density(const Image& image, const Mask& tissue);

struct StainFitConfig {
  double lambda = 0.1;
  int iterations = 200;
  std::uint64_t seed = 0;
  double extreme_percentile = 1.0;  ///< angular percentile used to pick initial stain directions
};

/// Two-stain model: unit-norm, non-negative color columns W (3x2), with
/// column 0 the stain absorbing more in the blue channel; H (2xN) holds the
/// sparse concentrations of the rows the model was fitted on.
struct StainModel {
  std::array<std::array<double, 3>, 2> stains{};  ///< stains[k] = column k of W
  std::vector<std::array<double, 2>> concentrations;
  std::vector<double> objective;  ///< value at initialization, then after every iteration
};

/// Sparse NMF: minimizes ||V - W H||_F^2 + lambda * sum(H) over W, H >= 0 with
/// unit-norm W columns by alternating multiplicative updates. The recorded
/// objective is non-increasing.
StainModel fit_stain_model(const ODMatrix& od, const StainFitConfig& cfg = {});

/// Objective value of (W, H) on `od`.
double stain_objective(const ODMatrix& od, const StainModel& model, double lambda);

/// Exact per-row non-negative least squares of od rows against the stain columns.
std::vector<std::array<double, 2>> stain_concentrations(const std::array<std::array<double, 3>, 2>& stains,
                                                        const ODMatrix& od);

struct NormalizeConfig {
  StainFitConfig fit;
  double percentile = 99.0;
  double background_fraction = 0.9;
  std::size_t max_fit_pixels = 5000;  ///< evenly strided subsample used for the NMF fit
};

struct NormalizeDiagnostics {
  StainModel source;
  StainModel reference;
  std::array<double, 2> scale{1.0, 1.0};
};

/// Maps the source stain appearance onto the reference: concentrations are
/// rescaled by the ratio of per-stain percentiles and re-rendered with the
/// reference stain colors. Background pixels are copied. A source with no
/// tissue is returned unchanged; a reference with no tissue is a data error.
Image normalize_to_reference(const Image& source, const Image& reference, const NormalizeConfig& cfg = {},
                             NormalizeDiagnostics* diagnostics = nullptr);

/// Angle between two 3-vectors in degrees.
double angle_degrees(const std::array<double, 3>& a, const std::array<double, 3>& b);

/// Largest per-column angle after the better of the two column matchings.
double max_stain_angle(const StainModel& a, const StainModel& b);

/// Text form: line 1 holds W column-major (6 floats), line 2 is a `#` metadata line.
void save_stain_model(const StainModel& model, const StainFitConfig& cfg, const std::filesystem::path& path);
StainModel load_stain_model(const std::filesystem::path& path);

}  // namespace wsib
