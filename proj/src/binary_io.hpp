#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "wsib/error.hpp"

namespace wsib::detail {

class LeWriter {
 public:
  explicit LeWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw_data(fmt::format("{}: cannot open for writing", path.string()));
  }

  void magic(std::string_view m) { out_.write(m.data(), static_cast<std::streamsize>(m.size())); }
  void u32(std::uint32_t v) { bytes(v, 4); }
  void u64(std::uint64_t v) { bytes(v, 8); }
  void f32(float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    bytes(v, 4);
  }
  void finish() {
    out_.flush();
    if (!out_) throw_data(fmt::format("{}: write failed", path_.string()));
  }

 private:
  void bytes(std::uint64_t v, int n) {
    char buf[8];
    for (int i = 0; i < n; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(buf, n);
  }

  std::filesystem::path path_;
  std::ofstream out_;
};

class LeReader {
 public:
  explicit LeReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw_data(fmt::format("{}: cannot open", path.string()));
  }

  void expect_magic(std::string_view m) {
    std::string got(m.size(), '\0');
    in_.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (!in_ || got != m) throw_data(fmt::format("{}: bad magic, expected {}", path_.string(), m));
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(bytes(4)); }
  std::uint64_t u64() { return bytes(8); }
  float f32() {
    const auto v = static_cast<std::uint32_t>(bytes(4));
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof())
      throw_data(fmt::format("{}: trailing bytes after payload", path_.string()));
  }

 private:
  std::uint64_t bytes(int n) {
    unsigned char buf[8];
    in_.read(reinterpret_cast<char*>(buf), n);
    if (!in_) throw_data(fmt::format("{}: truncated file", path_.string()));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }

  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace wsib::detail
