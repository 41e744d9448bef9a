#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "glitchsim/fault.hpp"

namespace glitchsim {

/// INI-style key-value configuration. `[section]` headers prefix the keys
/// that follow them, so `epochs = 40` under `[model]` is read as
/// "model.epochs". Full-line comments start with `#` or `;`. Relative paths
/// resolve against the directory of the file.
class Config {
 public:
  Config() = default;

  static Config load(const std::filesystem::path& file);
  static Config parse(std::string_view text, std::filesystem::path base_dir = ".");

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;

  // Typed getters throw InputError naming the key on malformed values.
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Keys under `prefix.` with the prefix removed.
  std::map<std::string, std::string> section(const std::string& prefix) const;
  const std::map<std::string, std::string>& values() const { return values_; }

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  const std::filesystem::path& base_dir() const { return base_dir_; }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_ = ".";
};

std::int64_t parse_int(std::string_view text, std::string_view what);
std::uint64_t parse_u64(std::string_view text, std::string_view what);
double parse_real(std::string_view text, std::string_view what);

/// Reads a profile file (flat `key = value` lines) on top of the defaults.
SusceptibilityProfile load_profile(const std::filesystem::path& file);

}  // namespace glitchsim
