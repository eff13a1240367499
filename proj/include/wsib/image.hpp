#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace wsib {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  auto operator<=>(const Rgb&) const = default;
};

/// 8-bit interleaved RGB raster, row-major.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {});
  Image(int width, int height, std::vector<std::uint8_t> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }
  bool empty() const noexcept { return data_.empty(); }

  std::span<std::uint8_t> data() noexcept { return data_; }
  std::span<const std::uint8_t> data() const noexcept { return data_; }

  std::uint8_t* pixel_ptr(int x, int y) noexcept { return data_.data() + index(x, y) * 3; }
  const std::uint8_t* pixel_ptr(int x, int y) const noexcept { return data_.data() + index(x, y) * 3; }

  Rgb at(int x, int y) const noexcept {
    const auto* p = pixel_ptr(x, y);
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) noexcept {
    auto* p = pixel_ptr(x, y);
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  std::size_t index(int x, int y) const noexcept { return static_cast<std::size_t>(y) * width_ + x; }

  bool operator==(const Image&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Binary label raster: 0 = non-tumor, 1 = tumor.
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height, std::uint8_t fill = 0);
  Mask(int width, int height, std::vector<std::uint8_t> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }

  std::span<std::uint8_t> data() noexcept { return data_; }
  std::span<const std::uint8_t> data() const noexcept { return data_; }

  std::uint8_t at(int x, int y) const noexcept { return data_[index(x, y)]; }
  void set(int x, int y, std::uint8_t v) noexcept { data_[index(x, y)] = v; }
  std::size_t index(int x, int y) const noexcept { return static_cast<std::size_t>(y) * width_ + x; }

  std::size_t count() const noexcept;

  bool operator==(const Mask&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Per-pixel tumor probability in [0, 1].
class ProbabilityMap {
 public:
  ProbabilityMap() = default;
  ProbabilityMap(int width, int height, double fill = 0.0);
  ProbabilityMap(int width, int height, std::vector<double> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  double at(int x, int y) const noexcept { return data_[index(x, y)]; }
  void set(int x, int y, double v) noexcept { data_[index(x, y)] = v; }
  std::size_t index(int x, int y) const noexcept { return static_cast<std::size_t>(y) * width_ + x; }

  bool operator==(const ProbabilityMap&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

template <typename A, typename B>
bool same_dims(const A& a, const B& b) noexcept {
  return a.width() == b.width() && a.height() == b.height();
}

void throw_dims_mismatch(const char* what, int aw, int ah, int bw, int bh);

/// Throws a data error when the two rasters differ in size.
template <typename A, typename B>
void require_same_dims(const A& a, const B& b, const char* what) {
  if (!same_dims(a, b)) throw_dims_mismatch(what, a.width(), a.height(), b.width(), b.height());
}

}  // namespace wsib
