#include "wsib/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "wsib/color.hpp"
#include "wsib/error.hpp"

namespace wsib {
namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

std::vector<int> axis_origins(int extent, int size, int stride) {
  std::vector<int> out;
  int pos = 0;
  for (; pos + size <= extent; pos += stride) out.push_back(pos);
  if (out.back() + size < extent) out.push_back(extent - size);
  return out;
}

void check_grid(const PatchGrid& grid, int width, int height, const char* what) {
  if (grid.image_width != width || grid.image_height != height)
    throw_data(fmt::format("{}: grid built for {}x{}, raster is {}x{}", what, grid.image_width, grid.image_height,
                           width, height));
}

// Covering windows of row (or column) `p`: indices into the axis origin list.
std::pair<std::size_t, std::size_t> covering(const std::vector<int>& axis, int size, int p) {
  const auto first = std::lower_bound(axis.begin(), axis.end(), p - size + 1) - axis.begin();
  const auto last = std::upper_bound(axis.begin(), axis.end(), p) - axis.begin();
  return {static_cast<std::size_t>(first), static_cast<std::size_t>(last)};
}

}  // namespace

Image downsample(const Image& image, int factor) {
  if (factor < 1) throw_usage(fmt::format("downsample factor must be >= 1, got {}", factor));
  if (factor == 1) return image;
  const int ow = ceil_div(image.width(), factor);
  const int oh = ceil_div(image.height(), factor);
  Image out(ow, oh);
  const auto src = image.data();
  auto dst = out.data();
  const int iw = image.width();
  const int ih = image.height();
#pragma omp parallel for schedule(static)
  for (int oy = 0; oy < oh; ++oy) {
    const int y0 = oy * factor;
    const int y1 = std::min(ih, y0 + factor);
    std::vector<std::uint64_t> sums(static_cast<std::size_t>(ow) * 3, 0);
    for (int y = y0; y < y1; ++y) {
      const std::uint8_t* row = src.data() + static_cast<std::size_t>(y) * iw * 3;
      for (int x = 0; x < iw; ++x) {
        std::uint64_t* s = sums.data() + static_cast<std::size_t>(x / factor) * 3;
        s[0] += row[3 * x];
        s[1] += row[3 * x + 1];
        s[2] += row[3 * x + 2];
      }
    }
    for (int ox = 0; ox < ow; ++ox) {
      const std::uint64_t n =
          static_cast<std::uint64_t>(std::min(iw, (ox + 1) * factor) - ox * factor) * static_cast<std::uint64_t>(y1 - y0);
      for (int c = 0; c < 3; ++c)
        dst[(static_cast<std::size_t>(oy) * ow + ox) * 3 + c] =
            static_cast<std::uint8_t>((sums[static_cast<std::size_t>(ox) * 3 + c] * 2 + n) / (2 * n));
    }
  }
  return out;
}

ProbabilityMap downsample_fraction(const Mask& mask, int factor) {
  if (factor < 1) throw_usage(fmt::format("downsample factor must be >= 1, got {}", factor));
  const int ow = ceil_div(mask.width(), factor);
  const int oh = ceil_div(mask.height(), factor);
  ProbabilityMap out(ow, oh);
#pragma omp parallel for schedule(static)
  for (int oy = 0; oy < oh; ++oy) {
    const int y1 = std::min(mask.height(), (oy + 1) * factor);
    for (int ox = 0; ox < ow; ++ox) {
      const int x1 = std::min(mask.width(), (ox + 1) * factor);
      std::size_t ones = 0;
      for (int y = oy * factor; y < y1; ++y)
        for (int x = ox * factor; x < x1; ++x) ones += mask.at(x, y);
      const auto n = static_cast<double>((x1 - ox * factor) * (y1 - oy * factor));
      out.set(ox, oy, static_cast<double>(ones) / n);
    }
  }
  return out;
}

Mask upsample_nearest(const Mask& mask, int width, int height) {
  if (width == mask.width() && height == mask.height()) return mask;
  Mask out(width, height);
  std::vector<int> src_x(width);
  for (int x = 0; x < width; ++x)
    src_x[x] = static_cast<int>(static_cast<std::int64_t>(x) * mask.width() / width);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y) {
    const int sy = static_cast<int>(static_cast<std::int64_t>(y) * mask.height() / height);
    for (int x = 0; x < width; ++x) out.set(x, y, mask.at(src_x[x], sy));
  }
  return out;
}

Image resize(const Image& image, int width, int height) {
  if (width < 1 || height < 1) throw_usage("resize target must be at least 1x1");
  if (width == image.width() && height == image.height()) return image;
  const int factor = std::max(1, std::min(image.width() / width, image.height() / height));
  const Image src = downsample(image, factor);
  if (width == src.width() && height == src.height()) return src;
  Image out(width, height);
  const double sx = static_cast<double>(src.width()) / width;
  const double sy = static_cast<double>(src.height()) / height;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double tx = fx - x0;
      auto* d = out.pixel_ptr(x, y);
      for (int c = 0; c < 3; ++c) {
        const double top = src.pixel_ptr(x0, y0)[c] * (1 - tx) + src.pixel_ptr(x1, y0)[c] * tx;
        const double bottom = src.pixel_ptr(x0, y1)[c] * (1 - tx) + src.pixel_ptr(x1, y1)[c] * tx;
        d[c] = static_cast<std::uint8_t>(std::clamp(std::lround(top * (1 - ty) + bottom * ty), 0L, 255L));
      }
    }
  }
  return out;
}

PatchGrid make_grid(int width, int height, int patch_size, int stride) {
  if (width < 1 || height < 1) throw_usage(fmt::format("invalid grid extent {}x{}", width, height));
  if (patch_size < 1) throw_usage("patch_size must be >= 1");
  if (patch_size > std::min(width, height))
    throw_usage(fmt::format("patch_size {} larger than image {}x{}", patch_size, width, height));
  if (stride < 1 || stride > patch_size)
    throw_usage(fmt::format("stride must lie in [1, patch_size], got {}", stride));
  PatchGrid grid{width, height, patch_size, stride, axis_origins(width, patch_size, stride),
                 axis_origins(height, patch_size, stride), {}};
  grid.origins.reserve(grid.xs.size() * grid.ys.size());
  for (int y : grid.ys)
    for (int x : grid.xs) grid.origins.push_back({x, y});
  return grid;
}

Image crop(const Image& image, int x, int y, int width, int height) {
  if (x < 0 || y < 0 || x + width > image.width() || y + height > image.height())
    throw_data(fmt::format("crop window ({}, {}, {}x{}) outside {}x{} image", x, y, width, height, image.width(),
                           image.height()));
  Image out(width, height);
  for (int r = 0; r < height; ++r)
    std::copy_n(image.pixel_ptr(x, y + r), static_cast<std::size_t>(width) * 3, out.pixel_ptr(0, r));
  return out;
}

Mask crop(const Mask& mask, int x, int y, int width, int height) {
  if (x < 0 || y < 0 || x + width > mask.width() || y + height > mask.height())
    throw_data(fmt::format("crop window ({}, {}, {}x{}) outside {}x{} mask", x, y, width, height, mask.width(),
                           mask.height()));
  Mask out(width, height);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) out.set(c, r, mask.at(x + c, y + r));
  return out;
}

std::vector<Image> extract_patches(const Image& image, const PatchGrid& grid) {
  check_grid(grid, image.width(), image.height(), "extract_patches");
  std::vector<Image> patches(grid.size());
  const auto n = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    patches[i] = crop(image, grid.origins[i].x, grid.origins[i].y, grid.patch_size, grid.patch_size);
  return patches;
}

Mask stitch_patch_labels(const PatchGrid& grid, std::span<const std::uint8_t> labels) {
  if (labels.size() != grid.size())
    throw_data(fmt::format("stitch_patch_labels: {} labels for {} windows", labels.size(), grid.size()));
  Mask out(grid.image_width, grid.image_height);
  const std::size_t cols = grid.xs.size();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < grid.image_height; ++y) {
    const auto [r0, r1] = covering(grid.ys, grid.patch_size, y);
    std::vector<int> ones(grid.image_width, 0);
    std::vector<int> total(grid.image_width, 0);
    for (std::size_t r = r0; r < r1; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        const int x0 = grid.xs[c];
        const std::uint8_t label = labels[r * cols + c] ? 1 : 0;
        for (int x = x0; x < x0 + grid.patch_size; ++x) {
          ones[x] += label;
          total[x] += 1;
        }
      }
    for (int x = 0; x < grid.image_width; ++x) out.set(x, y, 2 * ones[x] >= total[x] ? 1 : 0);
  }
  return out;
}

ProbabilityMap stitch_dense(const PatchGrid& grid, std::span<const ProbabilityMap> patches) {
  if (patches.size() != grid.size())
    throw_data(fmt::format("stitch_dense: {} patch maps for {} windows", patches.size(), grid.size()));
  for (const auto& p : patches)
    if (p.width() != grid.patch_size || p.height() != grid.patch_size)
      throw_data(fmt::format("stitch_dense: patch map {}x{} does not match patch size {}", p.width(), p.height(),
                             grid.patch_size));
  ProbabilityMap out(grid.image_width, grid.image_height);
  const std::size_t cols = grid.xs.size();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < grid.image_height; ++y) {
    const auto [r0, r1] = covering(grid.ys, grid.patch_size, y);
    std::vector<double> sum(grid.image_width, 0.0);
    std::vector<int> count(grid.image_width, 0);
    // Window index order, matching the serial scatter.
    for (std::size_t r = r0; r < r1; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        const auto& patch = patches[r * cols + c];
        const int x0 = grid.xs[c];
        const int py = y - grid.ys[r];
        for (int x = x0; x < x0 + grid.patch_size; ++x) {
          sum[x] += patch.at(x - x0, py);
          count[x] += 1;
        }
      }
    for (int x = 0; x < grid.image_width; ++x) out.set(x, y, std::clamp(sum[x] / count[x], 0.0, 1.0));
  }
  return out;
}

Mask threshold(const ProbabilityMap& map, double t) {
  Mask out(map.width(), map.height());
  const auto src = map.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] >= t ? 1 : 0;
  return out;
}

double mean_saturation(const Image& image) {
  double total = 0.0;
  for (int y = 0; y < image.height(); ++y) {
    double row = 0.0;
    for (int x = 0; x < image.width(); ++x) row += saturation(image.at(x, y));
    total += row;
  }
  return total / static_cast<double>(image.pixel_count());
}

bool is_tissue(const Image& patch, double min_saturation) { return mean_saturation(patch) >= min_saturation; }

void write_grid_manifest(const PatchGrid& grid, std::ostream& out) {
  out << "WSGRID " << grid.image_width << ' ' << grid.image_height << ' ' << grid.patch_size << ' ' << grid.stride
      << ' ' << grid.size() << '\n';
  for (const auto& o : grid.origins) out << o.x << ' ' << o.y << '\n';
}

PatchGrid read_grid_manifest(std::istream& in) {
  std::string magic;
  int width = 0, height = 0, size = 0, stride = 0;
  std::size_t count = 0;
  if (!(in >> magic >> width >> height >> size >> stride >> count) || magic != "WSGRID")
    throw_data("grid manifest: malformed header");
  PatchGrid grid = make_grid(width, height, size, stride);
  if (grid.size() != count) throw_data("grid manifest: origin count disagrees with header geometry");
  for (std::size_t i = 0; i < count; ++i) {
    Origin o;
    if (!(in >> o.x >> o.y)) throw_data(fmt::format("grid manifest: missing origin {}", i));
    if (!(o == grid.origins[i])) throw_data(fmt::format("grid manifest: origin {} disagrees with grid geometry", i));
  }
  return grid;
}

void save_grid_manifest(const PatchGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw_data(fmt::format("{}: cannot open for writing", path.string()));
  write_grid_manifest(grid, out);
}

PatchGrid load_grid_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_data(fmt::format("{}: cannot open", path.string()));
  return read_grid_manifest(in);
}

namespace serial {

Image downsample(const Image& image, int factor) {
  if (factor < 1) throw_usage(fmt::format("downsample factor must be >= 1, got {}", factor));
  const int ow = ceil_div(image.width(), factor);
  const int oh = ceil_div(image.height(), factor);
  Image out(ow, oh);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      std::uint64_t sum[3] = {0, 0, 0};
      std::uint64_t n = 0;
      for (int y = oy * factor; y < std::min(image.height(), (oy + 1) * factor); ++y)
        for (int x = ox * factor; x < std::min(image.width(), (ox + 1) * factor); ++x) {
          const Rgb c = image.at(x, y);
          sum[0] += c.r;
          sum[1] += c.g;
          sum[2] += c.b;
          ++n;
        }
      out.set(ox, oy,
              {static_cast<std::uint8_t>((2 * sum[0] + n) / (2 * n)), static_cast<std::uint8_t>((2 * sum[1] + n) / (2 * n)),
               static_cast<std::uint8_t>((2 * sum[2] + n) / (2 * n))});
    }
  return out;
}

Mask stitch_patch_labels(const PatchGrid& grid, std::span<const std::uint8_t> labels) {
  if (labels.size() != grid.size())
    throw_data(fmt::format("stitch_patch_labels: {} labels for {} windows", labels.size(), grid.size()));
  std::vector<int> ones(static_cast<std::size_t>(grid.image_width) * grid.image_height, 0);
  std::vector<int> total(ones.size(), 0);
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (int y = grid.origins[i].y; y < grid.origins[i].y + grid.patch_size; ++y)
      for (int x = grid.origins[i].x; x < grid.origins[i].x + grid.patch_size; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * grid.image_width + x;
        ones[p] += labels[i] ? 1 : 0;
        total[p] += 1;
      }
  Mask out(grid.image_width, grid.image_height);
  for (std::size_t p = 0; p < ones.size(); ++p) out.data()[p] = 2 * ones[p] >= total[p] ? 1 : 0;
  return out;
}

ProbabilityMap stitch_dense(const PatchGrid& grid, std::span<const ProbabilityMap> patches) {
  if (patches.size() != grid.size())
    throw_data(fmt::format("stitch_dense: {} patch maps for {} windows", patches.size(), grid.size()));
  std::vector<double> sum(static_cast<std::size_t>(grid.image_width) * grid.image_height, 0.0);
  std::vector<int> count(sum.size(), 0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (patches[i].width() != grid.patch_size || patches[i].height() != grid.patch_size)
      throw_data("stitch_dense: patch map does not match patch size");
    for (int y = 0; y < grid.patch_size; ++y)
      for (int x = 0; x < grid.patch_size; ++x) {
        const std::size_t p =
            static_cast<std::size_t>(grid.origins[i].y + y) * grid.image_width + grid.origins[i].x + x;
        sum[p] += patches[i].at(x, y);
        count[p] += 1;
      }
  }
  ProbabilityMap out(grid.image_width, grid.image_height);
  for (std::size_t p = 0; p < sum.size(); ++p) out.data()[p] = std::clamp(sum[p] / count[p], 0.0, 1.0);
  return out;
}

}  // namespace serial
}  // namespace wsib
