#include "wsib/superpixel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include <fmt/format.h>

#include "binary_io.hpp"
#include "wsib/error.hpp"

namespace wsib {
namespace {

constexpr std::uint32_t kUnassigned = std::numeric_limits<std::uint32_t>::max();

struct Cluster {
  double l, a, b, x, y;
};

struct SlicSetup {
  int width = 0;
  int height = 0;
  double step = 0.0;    // S
  double radius = 0.0;  // search half-window
  double spatial_weight = 0.0;  // (m / S)^2
  std::vector<Cluster> clusters;
};

double distance2(const Cluster& c, const Lab& p, int x, int y, double spatial_weight) {
  const double dl = p.l - c.l;
  const double da = p.a - c.a;
  const double db = p.b - c.b;
  const double dx = x - c.x;
  const double dy = y - c.y;
  return dl * dl + da * da + db * db + (dx * dx + dy * dy) * spatial_weight;
}

double lab_dist2(const Lab& p, const Lab& q) {
  const double dl = p.l - q.l, da = p.a - q.a, db = p.b - q.b;
  return dl * dl + da * da + db * db;
}

void check_params(const Image& image, const SlicParams& params) {
  if (params.k_target < 1) throw_usage("SLIC k_target must be >= 1");
  if (!(params.compactness > 0.0)) throw_usage("SLIC compactness must be > 0");
  if (params.max_iter < 1) throw_usage("SLIC max_iter must be >= 1");
  if (static_cast<std::size_t>(params.k_target) > image.pixel_count())
    throw_usage(fmt::format("SLIC k_target {} exceeds pixel count {}", params.k_target, image.pixel_count()));
}

SlicSetup initialize(const std::vector<Lab>& lab, int w, int h, const SlicParams& params) {
  SlicSetup s;
  s.width = w;
  s.height = h;
  const double n = static_cast<double>(w) * h;
  s.step = std::sqrt(n / params.k_target);
  const int nx = std::clamp(static_cast<int>(std::lround(std::sqrt(params.k_target * static_cast<double>(w) / h))), 1, w);
  const int ny = std::clamp(static_cast<int>(std::lround(static_cast<double>(params.k_target) / nx)), 1, h);
  const double cell_w = static_cast<double>(w) / nx;
  const double cell_h = static_cast<double>(h) / ny;
  s.radius = std::max({s.step, cell_w, cell_h});
  s.spatial_weight = (params.compactness / s.step) * (params.compactness / s.step);

  auto at = [&](int x, int y) -> const Lab& { return lab[static_cast<std::size_t>(y) * w + x]; };
  auto gradient = [&](int x, int y) {
    const int xl = std::max(0, x - 1), xr = std::min(w - 1, x + 1);
    const int yu = std::max(0, y - 1), yd = std::min(h - 1, y + 1);
    return lab_dist2(at(xr, y), at(xl, y)) + lab_dist2(at(x, yd), at(x, yu));
  };

  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      // Cell center in pixel coordinates; it only snaps to a pixel when a
      // neighbor has a strictly lower gradient.
      double fx = (i + 0.5) * cell_w - 0.5;
      double fy = (j + 0.5) * cell_h - 0.5;
      const int ox = std::clamp(static_cast<int>(std::lround(fx)), 0, w - 1);
      const int oy = std::clamp(static_cast<int>(std::lround(fy)), 0, h - 1);
      int cx = ox, cy = oy;
      double best = gradient(ox, oy);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int x = ox + dx, y = oy + dy;
          if (x < 0 || y < 0 || x >= w || y >= h) continue;
          const double g = gradient(x, y);
          if (g < best) {
            best = g;
            cx = x;
            cy = y;
          }
        }
      if (cx != ox || cy != oy) {
        fx = cx;
        fy = cy;
      }
      const Lab& c = at(cx, cy);
      s.clusters.push_back({c.l, c.a, c.b, fx, fy});
    }
  return s;
}

struct Candidate {
  double d2 = std::numeric_limits<double>::infinity();
  std::uint32_t index = kUnassigned;

  void offer(double d, std::uint32_t k) {
    if (d < d2 || (d == d2 && k < index)) {
      d2 = d;
      index = k;
    }
  }
};

// One assignment pass with sorted-sweep candidate search. Returns per-row energy.
bool assign_sweep(const SlicSetup& s, const std::vector<Lab>& lab, std::vector<std::uint32_t>& labels,
                  std::vector<double>& row_energy) {
  const int w = s.width;
  const int h = s.height;
  bool changed = false;
#pragma omp parallel for schedule(dynamic, 4) reduction(|| : changed)
  for (int y = 0; y < h; ++y) {
    std::vector<std::uint32_t> cand;
    for (std::uint32_t k = 0; k < s.clusters.size(); ++k)
      if (std::abs(y - s.clusters[k].y) <= s.radius) cand.push_back(k);
    std::sort(cand.begin(), cand.end(), [&](std::uint32_t a, std::uint32_t b) {
      return s.clusters[a].x < s.clusters[b].x || (s.clusters[a].x == s.clusters[b].x && a < b);
    });
    std::size_t lo = 0;
    double energy = 0.0;
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      const Lab& px = lab[p];
      Candidate best;
      if (labels[p] != kUnassigned) best.offer(distance2(s.clusters[labels[p]], px, x, y, s.spatial_weight), labels[p]);
      while (lo < cand.size() && s.clusters[cand[lo]].x < x - s.radius) ++lo;
      for (std::size_t i = lo; i < cand.size() && s.clusters[cand[i]].x <= x + s.radius; ++i)
        best.offer(distance2(s.clusters[cand[i]], px, x, y, s.spatial_weight), cand[i]);
      if (best.index != labels[p]) {
        changed = true;
        labels[p] = best.index;
      }
      if (best.index != kUnassigned) energy += best.d2;
    }
    row_energy[y] = energy;
  }
  return changed;
}

bool assign_exhaustive(const SlicSetup& s, const std::vector<Lab>& lab, std::vector<std::uint32_t>& labels,
                       std::vector<double>& row_energy) {
  bool changed = false;
  for (int y = 0; y < s.height; ++y) {
    double energy = 0.0;
    for (int x = 0; x < s.width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * s.width + x;
      Candidate best;
      if (labels[p] != kUnassigned)
        best.offer(distance2(s.clusters[labels[p]], lab[p], x, y, s.spatial_weight), labels[p]);
      for (std::uint32_t k = 0; k < s.clusters.size(); ++k) {
        const Cluster& c = s.clusters[k];
        if (std::abs(x - c.x) <= s.radius && std::abs(y - c.y) <= s.radius)
          best.offer(distance2(c, lab[p], x, y, s.spatial_weight), k);
      }
      if (best.index != labels[p]) {
        changed = true;
        labels[p] = best.index;
      }
      if (best.index != kUnassigned) energy += best.d2;
    }
    row_energy[y] = energy;
  }
  return changed;
}

void assign_unreached(const SlicSetup& s, const std::vector<Lab>& lab, std::vector<std::uint32_t>& labels) {
  for (std::size_t p = 0; p < labels.size(); ++p) {
    if (labels[p] != kUnassigned) continue;
    const int x = static_cast<int>(p % s.width);
    const int y = static_cast<int>(p / s.width);
    Candidate best;
    for (std::uint32_t k = 0; k < s.clusters.size(); ++k)
      best.offer(distance2(s.clusters[k], lab[p], x, y, s.spatial_weight), k);
    labels[p] = best.index;
  }
}

void update_centers(SlicSetup& s, const std::vector<Lab>& lab, const std::vector<std::uint32_t>& labels) {
  std::vector<std::array<double, 5>> sums(s.clusters.size(), {0, 0, 0, 0, 0});
  std::vector<std::size_t> counts(s.clusters.size(), 0);
  for (std::size_t p = 0; p < labels.size(); ++p) {
    auto& acc = sums[labels[p]];
    acc[0] += lab[p].l;
    acc[1] += lab[p].a;
    acc[2] += lab[p].b;
    acc[3] += static_cast<double>(p % s.width);
    acc[4] += static_cast<double>(p / s.width);
    ++counts[labels[p]];
  }
  for (std::size_t k = 0; k < s.clusters.size(); ++k) {
    if (counts[k] == 0) continue;
    const double n = static_cast<double>(counts[k]);
    s.clusters[k] = {sums[k][0] / n, sums[k][1] / n, sums[k][2] / n, sums[k][3] / n, sums[k][4] / n};
  }
}

template <typename AssignFn>
SuperpixelMap run_slic(const Image& image, const std::vector<Lab>& lab, const SlicParams& params, SlicStats* stats,
                       AssignFn assign) {
  check_params(image, params);
  SlicSetup setup = initialize(lab, image.width(), image.height(), params);
  std::vector<std::uint32_t> labels(image.pixel_count(), kUnassigned);
  std::vector<double> row_energy(image.height(), 0.0);
  if (stats) {
    *stats = {};
    stats->initial_clusters = setup.clusters.size();
  }
  for (int iter = 0; iter < params.max_iter; ++iter) {
    const bool changed = assign(setup, lab, labels, row_energy);
    if (iter == 0) assign_unreached(setup, lab, labels);
    if (stats) {
      stats->energy.push_back(std::accumulate(row_energy.begin(), row_energy.end(), 0.0));
      stats->iterations = iter + 1;
    }
    if (!changed && iter > 0) break;
    update_centers(setup, lab, labels);
  }
  SuperpixelMap raw{image.width(), image.height(), static_cast<std::uint32_t>(setup.clusters.size()), std::move(labels)};
  return enforce_connectivity(raw, params.connectivity_min_frac);
}

struct UnionFind {
  std::vector<std::uint32_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0u); }
  std::uint32_t find(std::uint32_t i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  }
};

}  // namespace

void SuperpixelMap::validate() const {
  if (width < 1 || height < 1 || labels.size() != static_cast<std::size_t>(width) * height)
    throw_data("superpixel map: label raster does not match its dimensions");
  std::vector<bool> seen(count, false);
  for (auto l : labels) {
    if (l >= count) throw_data(fmt::format("superpixel map: id {} out of range [0, {})", l, count));
    seen[l] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) throw_data("superpixel map: ids are not dense");
}

SuperpixelMap slic(const Image& image, const SlicParams& params, SlicStats* stats) {
  check_params(image, params);
  return run_slic(image, to_lab(image), params, stats, assign_sweep);
}

namespace serial {
SuperpixelMap slic(const Image& image, const SlicParams& params, SlicStats* stats) {
  check_params(image, params);
  return run_slic(image, serial::to_lab(image), params, stats, assign_exhaustive);
}
}  // namespace serial

SuperpixelMap enforce_connectivity(const SuperpixelMap& map, double min_frac) {
  const int w = map.width;
  const int h = map.height;
  const std::size_t n = map.labels.size();
  if (n != static_cast<std::size_t>(w) * h || map.count == 0) throw_data("enforce_connectivity: invalid map");
  if (std::any_of(map.labels.begin(), map.labels.end(), [&](std::uint32_t l) { return l >= map.count; }))
    throw_data("enforce_connectivity: label id out of range");

  // 4-connected components in raster order.
  std::vector<std::uint32_t> comp(n, kUnassigned);
  std::vector<std::uint32_t> comp_label, comp_size, comp_first;
  std::vector<std::uint32_t> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] != kUnassigned) continue;
    const auto id = static_cast<std::uint32_t>(comp_label.size());
    const std::uint32_t label = map.labels[start];
    std::uint32_t size = 0;
    comp[start] = id;
    stack.assign(1, static_cast<std::uint32_t>(start));
    while (!stack.empty()) {
      const std::uint32_t p = stack.back();
      stack.pop_back();
      ++size;
      const int x = static_cast<int>(p % w);
      const int y = static_cast<int>(p / w);
      const std::uint32_t nb[4] = {x > 0 ? p - 1 : kUnassigned, x + 1 < w ? p + 1 : kUnassigned,
                                   y > 0 ? p - w : kUnassigned, y + 1 < h ? p + w : kUnassigned};
      for (auto q : nb)
        if (q != kUnassigned && comp[q] == kUnassigned && map.labels[q] == label) {
          comp[q] = id;
          stack.push_back(q);
        }
    }
    comp_label.push_back(label);
    comp_size.push_back(size);
    comp_first.push_back(static_cast<std::uint32_t>(start));
  }
  const std::size_t ncomp = comp_label.size();

  std::vector<std::vector<std::uint32_t>> adjacent(ncomp);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      if (x + 1 < w && comp[p + 1] != comp[p]) {
        adjacent[comp[p]].push_back(comp[p + 1]);
        adjacent[comp[p + 1]].push_back(comp[p]);
      }
      if (y + 1 < h && comp[p + w] != comp[p]) {
        adjacent[comp[p]].push_back(comp[p + w]);
        adjacent[comp[p + w]].push_back(comp[p]);
      }
    }
  for (auto& a : adjacent) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }

  // The largest component of each label keeps it; other fragments always merge.
  std::vector<std::uint32_t> dominant(map.count, kUnassigned);
  for (std::uint32_t c = 0; c < ncomp; ++c) {
    auto& d = dominant[comp_label[c]];
    if (d == kUnassigned || comp_size[c] > comp_size[d]) d = c;
  }

  const double min_area = min_frac * static_cast<double>(n) / map.count;
  std::vector<std::uint32_t> order(ncomp);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return comp_size[a] < comp_size[b] || (comp_size[a] == comp_size[b] && comp_first[a] < comp_first[b]);
  });

  UnionFind groups(ncomp);
  std::vector<std::uint64_t> group_size(comp_size.begin(), comp_size.end());
  std::vector<std::uint32_t> group_first = comp_first;
  std::vector<std::vector<std::uint32_t>> group_adj = adjacent;
  for (std::uint32_t c : order) {
    if (groups.find(c) != c) continue;
    const bool is_dominant = dominant[comp_label[c]] == c;
    if (is_dominant && static_cast<double>(group_size[c]) >= min_area) continue;
    std::uint32_t target = kUnassigned;
    for (std::uint32_t a : group_adj[c]) {
      const std::uint32_t r = groups.find(a);
      if (r == c) continue;
      if (target == kUnassigned || group_size[r] > group_size[target] ||
          (group_size[r] == group_size[target] && group_first[r] < group_first[target]))
        target = r;
    }
    if (target == kUnassigned) continue;
    groups.parent[c] = target;
    group_size[target] += group_size[c];
    group_first[target] = std::min(group_first[target], group_first[c]);
    auto& dst = group_adj[target];
    dst.insert(dst.end(), group_adj[c].begin(), group_adj[c].end());
    std::sort(dst.begin(), dst.end());
    dst.erase(std::unique(dst.begin(), dst.end()), dst.end());
    group_adj[c].clear();
  }

  SuperpixelMap out{w, h, 0, std::vector<std::uint32_t>(n)};
  std::vector<std::uint32_t> dense(ncomp, kUnassigned);
  for (std::size_t p = 0; p < n; ++p) {
    const std::uint32_t r = groups.find(comp[p]);
    if (dense[r] == kUnassigned) dense[r] = out.count++;
    out.labels[p] = dense[r];
  }
  return out;
}

bool is_connected(const SuperpixelMap& map) {
  // Flood fill from each unvisited pixel; a second component for any id fails.
  std::vector<std::uint32_t> comp_seen(map.count, 0);
  const int w = map.width;
  const int h = map.height;
  std::vector<bool> visited(map.labels.size(), false);
  std::vector<std::uint32_t> stack;
  for (std::size_t s = 0; s < map.labels.size(); ++s) {
    if (visited[s]) continue;
    const std::uint32_t label = map.labels[s];
    if (label >= map.count || ++comp_seen[label] > 1) return false;
    visited[s] = true;
    stack.assign(1, static_cast<std::uint32_t>(s));
    while (!stack.empty()) {
      const std::uint32_t p = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(p % w), y = static_cast<int>(p / w);
      const auto q0 = static_cast<std::int64_t>(p);
      const std::int64_t nb[4] = {x > 0 ? q0 - 1 : -1, x + 1 < w ? q0 + 1 : -1, y > 0 ? q0 - w : -1,
                                  y + 1 < h ? q0 + w : -1};
      for (auto q : nb)
        if (q >= 0 && !visited[q] && map.labels[q] == label) {
          visited[q] = true;
          stack.push_back(static_cast<std::uint32_t>(q));
        }
    }
  }
  return true;
}

FeatureMatrix aggregate_features(const Image& image, const SuperpixelMap& map, const FeatureExtractor& extractor) {
  if (image.width() != map.width || image.height() != map.height)
    throw_dims_mismatch("aggregate_features", image.width(), image.height(), map.width, map.height);
  const int w = map.width;
  const int h = map.height;
  const auto ctx = FeatureContext::build(image);

  std::vector<std::size_t> offsets(map.count + 1, 0);
  for (auto l : map.labels) {
    if (l >= map.count) throw_data("aggregate_features: label out of range");
    ++offsets[l + 1];
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  std::vector<std::uint32_t> pixels(map.labels.size());
  std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
  std::vector<std::size_t> perimeter(map.count, 0);
  for (std::size_t p = 0; p < map.labels.size(); ++p) {
    const std::uint32_t l = map.labels[p];
    pixels[cursor[l]++] = static_cast<std::uint32_t>(p);
    const int x = static_cast<int>(p % w), y = static_cast<int>(p / w);
    const bool edge = x == 0 || y == 0 || x == w - 1 || y == h - 1 || map.labels[p - 1] != l ||
                      map.labels[p + 1] != l || map.labels[p - w] != l || map.labels[p + w] != l;
    if (edge) ++perimeter[l];
  }

  FeatureMatrix out{map.count, extractor.dimension(), std::vector<double>(map.count * extractor.dimension())};
  const auto count = static_cast<std::ptrdiff_t>(map.count);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    if (offsets[i + 1] == offsets[i]) continue;
    const Region region{std::span<const std::uint32_t>(pixels.data() + offsets[i], offsets[i + 1] - offsets[i]),
                        perimeter[i]};
    extractor.extract(ctx, region, out.row(static_cast<std::size_t>(i)));
  }
  for (std::size_t i = 0; i < map.count; ++i)
    if (offsets[i + 1] == offsets[i]) throw_data(fmt::format("aggregate_features: superpixel {} is empty", i));
  return out;
}

Mask paint_labels(const SuperpixelMap& map, std::span<const std::uint8_t> labels) {
  if (labels.size() != map.count)
    throw_data(fmt::format("paint_labels: {} labels for {} superpixels", labels.size(), map.count));
  Mask out(map.width, map.height);
  auto dst = out.data();
  for (std::size_t p = 0; p < map.labels.size(); ++p) dst[p] = labels[map.labels[p]] ? 1 : 0;
  return out;
}

std::vector<std::uint8_t> superpixel_ground_truth(const SuperpixelMap& map, const Mask& gt) {
  if (gt.width() != map.width || gt.height() != map.height)
    throw_dims_mismatch("superpixel_ground_truth", map.width, map.height, gt.width(), gt.height());
  std::vector<std::size_t> ones(map.count, 0), total(map.count, 0);
  const auto g = gt.data();
  for (std::size_t p = 0; p < map.labels.size(); ++p) {
    ones[map.labels[p]] += g[p];
    ++total[map.labels[p]];
  }
  std::vector<std::uint8_t> out(map.count);
  for (std::size_t i = 0; i < map.count; ++i) out[i] = 2 * ones[i] > total[i] ? 1 : 0;
  return out;
}

void save_superpixel_map(const SuperpixelMap& map, const std::filesystem::path& path) {
  detail::LeWriter out(path);
  out.magic("WSPX");
  out.u32(1);
  out.u32(static_cast<std::uint32_t>(map.width));
  out.u32(static_cast<std::uint32_t>(map.height));
  for (auto l : map.labels) out.u32(l);
  out.finish();
}

SuperpixelMap load_superpixel_map(const std::filesystem::path& path) {
  detail::LeReader in(path);
  in.expect_magic("WSPX");
  if (const auto version = in.u32(); version != 1)
    throw_data(fmt::format("{}: unsupported WSPX version {}", path.string(), version));
  SuperpixelMap map;
  map.width = static_cast<int>(in.u32());
  map.height = static_cast<int>(in.u32());
  map.labels.resize(static_cast<std::size_t>(map.width) * map.height);
  std::uint32_t max_label = 0;
  for (auto& l : map.labels) {
    l = in.u32();
    max_label = std::max(max_label, l);
  }
  in.expect_end();
  map.count = map.labels.empty() ? 0 : max_label + 1;
  map.validate();
  return map;
}

void save_feature_matrix(const FeatureMatrix& features, const std::filesystem::path& path) {
  detail::LeWriter out(path);
  out.magic("WSFB");
  out.u32(1);
  out.u32(static_cast<std::uint32_t>(features.rows));
  out.u32(static_cast<std::uint32_t>(features.cols));
  for (double v : features.values) out.f32(static_cast<float>(v));
  out.finish();
}

FeatureMatrix load_feature_matrix(const std::filesystem::path& path) {
  detail::LeReader in(path);
  in.expect_magic("WSFB");
  if (const auto version = in.u32(); version != 1)
    throw_data(fmt::format("{}: unsupported WSFB version {}", path.string(), version));
  FeatureMatrix m;
  m.rows = in.u32();
  m.cols = in.u32();
  m.values.resize(m.rows * m.cols);
  for (auto& v : m.values) v = in.f32();
  in.expect_end();
  return m;
}

}  // namespace wsib
