#include "wsib/image.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "wsib/error.hpp"

namespace wsib {
namespace {

void check_dims(int width, int height) {
  if (width < 1 || height < 1) throw_data(fmt::format("invalid raster size {}x{}", width, height));
}

}  // namespace

void throw_dims_mismatch(const char* what, int aw, int ah, int bw, int bh) {
  throw_data(fmt::format("{}: dimension mismatch {}x{} vs {}x{}", what, aw, ah, bw, bh));
}

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  check_dims(width, height);
  data_.resize(pixel_count() * 3);
  for (std::size_t i = 0; i < pixel_count(); ++i) {
    data_[3 * i] = fill.r;
    data_[3 * i + 1] = fill.g;
    data_[3 * i + 2] = fill.b;
  }
}

Image::Image(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  check_dims(width, height);
  if (data_.size() != pixel_count() * 3)
    throw_data(fmt::format("image buffer holds {} bytes, expected {}", data_.size(), pixel_count() * 3));
}

Mask::Mask(int width, int height, std::uint8_t fill) : width_(width), height_(height) {
  check_dims(width, height);
  data_.assign(pixel_count(), fill ? 1 : 0);
}

Mask::Mask(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  check_dims(width, height);
  if (data_.size() != pixel_count())
    throw_data(fmt::format("mask buffer holds {} values, expected {}", data_.size(), pixel_count()));
  if (std::any_of(data_.begin(), data_.end(), [](std::uint8_t v) { return v > 1; }))
    throw_data("mask values must be 0 or 1");
}

std::size_t Mask::count() const noexcept {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

ProbabilityMap::ProbabilityMap(int width, int height, double fill) : width_(width), height_(height) {
  check_dims(width, height);
  data_.assign(pixel_count(), fill);
}

ProbabilityMap::ProbabilityMap(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
  check_dims(width, height);
  if (data_.size() != pixel_count())
    throw_data(fmt::format("probability buffer holds {} values, expected {}", data_.size(), pixel_count()));
}

}  // namespace wsib
