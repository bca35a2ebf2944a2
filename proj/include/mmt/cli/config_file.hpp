#pragma once

// Run configuration files: `key = value` lines, `#` comments, optional
// `[section]` headers that prefix the keys below them. Keys are
// `model.*`, `optim.*`, `preprocess.*`, `data.*`, `synth.*` and `run.*`;
// anything else is rejected with its line number.

#include "mmt/harness/training.hpp"

#include <filesystem>
#include <set>
#include <stdexcept>

namespace mmt::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Setting {
  std::string key;  // fully qualified, e.g. "optim.asam_rho"
  std::string value;
  std::string origin;  // "file:line" or "--set"
};

/// Splits text into qualified settings; syntax errors carry the line number.
std::vector<Setting> parse_config_text(const std::string& text, const std::string& source);

struct LoadedConfig {
  harness::RunConfig run;
  /// Keys given explicitly (file or override); everything else is a default.
  std::set<std::string> explicit_keys;
};

class ConfigBuilder {
 public:
  /// Relative data paths in a file resolve against that file's directory.
  void load_file(const std::filesystem::path& path);
  void apply(const Setting& setting, const std::filesystem::path& base = {});
  void apply_override(const std::string& assignment);

  /// Fills per-variant preset values for keys that were not given,
  /// copies preprocessing sizes into the model and validates.
  LoadedConfig finish() const;

 private:
  LoadedConfig state_;
};

/// Every documented key with its default, one per line.
std::string config_reference();

/// Complete `key = value` text that reloads to the same configuration.
std::string resolved_config_text(const harness::RunConfig& run);

bool is_preset_key(const std::string& key);

}  // namespace mmt::cli
