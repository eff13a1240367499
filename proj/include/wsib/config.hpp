#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wsib/augment.hpp"
#include "wsib/pipelines.hpp"
#include "wsib/synthetic.hpp"
#include "wsib/training.hpp"

namespace wsib {

/// Key-value file with [sections]. `#` and `;` start comments; keys before the
/// first section live in the unnamed section "".
class Config {
 public:
  struct Entry {
    std::string value;
    int line = 0;  ///< 0 for values set programmatically
  };

  static Config parse(const std::string& text, std::string source = "<config>");
  static Config load(const std::filesystem::path& path);

  const std::string& source() const noexcept { return source_; }
  bool has(const std::string& section, const std::string& key) const;
  const Entry* find(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, std::string value);

  std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& section, const std::string& key, std::vector<int> fallback) const;

  /// Usage error naming the line of the first key outside `allowed`.
  void require_known(const std::string& section, const std::vector<std::string>& allowed) const;
  std::vector<std::string> sections() const;

  /// "file:line: message" when the key came from a file.
  std::string where(const std::string& section, const std::string& key) const;

  std::string dump() const;

 private:
  std::string source_;
  std::map<std::string, std::map<std::string, Entry>> values_;
};

SyntheticSpec synthetic_spec_from_config(const Config& cfg);
std::string format_synthetic_spec(const SyntheticSpec& spec);

TrainConfig train_config_from(const Config& cfg);
AugmentConfig augment_config_from(const Config& cfg);

/// Strategy defaults overridden by the [<strategy>] section and [slic].
PipelineConfig pipeline_config_from(const Config& cfg, Strategy strategy);
std::string format_pipeline_config(const PipelineConfig& cfg);

}  // namespace wsib
