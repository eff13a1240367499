#include "wsib/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include <fmt/format.h>

#include "wsib/error.hpp"

namespace wsib {
namespace {

struct PngReader {
  png_image png{};

  explicit PngReader(const std::filesystem::path& path) {
    png.version = PNG_IMAGE_VERSION;
    if (!std::filesystem::exists(path)) throw_data(fmt::format("{}: no such file", path.string()));
    if (!png_image_begin_read_from_file(&png, path.c_str()))
      throw_data(fmt::format("{}: PNG decode error: {}", path.string(), png.message));
    if (png.format & PNG_FORMAT_FLAG_LINEAR) {
      png_image_free(&png);
      throw_data(fmt::format("{}: unsupported format: 16-bit samples", path.string()));
    }
    if (png.format & PNG_FORMAT_FLAG_ALPHA) {
      png_image_free(&png);
      throw_data(fmt::format("{}: unsupported channel count (alpha channel present)", path.string()));
    }
  }
  ~PngReader() { png_image_free(&png); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;

  std::vector<std::uint8_t> read(std::uint32_t format, const std::filesystem::path& path) {
    png.format = format;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr))
      throw_data(fmt::format("{}: PNG decode error: {}", path.string(), png.message));
    return buffer;
  }
};

std::vector<std::uint8_t> read_gray(const std::filesystem::path& path, int& width, int& height) {
  PngReader reader(path);
  if (reader.png.format & PNG_FORMAT_FLAG_COLOR)
    throw_data(fmt::format("{}: expected a grayscale PNG", path.string()));
  width = static_cast<int>(reader.png.width);
  height = static_cast<int>(reader.png.height);
  return reader.read(PNG_FORMAT_GRAY, path);
}

void write_png(const std::filesystem::path& path, int width, int height, std::uint32_t format,
               const std::uint8_t* pixels) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(width);
  png.height = static_cast<png_uint_32>(height);
  png.format = format;
  if (!png_image_write_to_file(&png, path.c_str(), 0, pixels, 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw_data(fmt::format("{}: PNG write error: {}", path.string(), message));
  }
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  PngReader reader(path);
  const int width = static_cast<int>(reader.png.width);
  const int height = static_cast<int>(reader.png.height);
  return Image(width, height, reader.read(PNG_FORMAT_RGB, path));
}

void save_image(const Image& image, const std::filesystem::path& path) {
  write_png(path, image.width(), image.height(), PNG_FORMAT_RGB, image.data().data());
}

Mask load_mask(const std::filesystem::path& path) {
  int width = 0;
  int height = 0;
  auto gray = read_gray(path, width, height);
  for (auto& v : gray) v = v >= 128 ? 1 : 0;
  return Mask(width, height, std::move(gray));
}

void save_mask(const Mask& mask, const std::filesystem::path& path) {
  std::vector<std::uint8_t> gray(mask.data().begin(), mask.data().end());
  for (auto& v : gray) v = v ? 255 : 0;
  write_png(path, mask.width(), mask.height(), PNG_FORMAT_GRAY, gray.data());
}

ProbabilityMap load_probability(const std::filesystem::path& path) {
  int width = 0;
  int height = 0;
  const auto gray = read_gray(path, width, height);
  std::vector<double> values(gray.size());
  std::transform(gray.begin(), gray.end(), values.begin(), [](std::uint8_t v) { return v / 255.0; });
  return ProbabilityMap(width, height, std::move(values));
}

void save_probability(const ProbabilityMap& map, const std::filesystem::path& path) {
  std::vector<std::uint8_t> gray(map.pixel_count());
  const auto values = map.data();
  for (std::size_t i = 0; i < gray.size(); ++i)
    gray[i] = static_cast<std::uint8_t>(std::lround(std::clamp(values[i], 0.0, 1.0) * 255.0));
  write_png(path, map.width(), map.height(), PNG_FORMAT_GRAY, gray.data());
}

}  // namespace wsib
