#include "glitchsim/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "glitchsim/errors.hpp"

namespace glitchsim {

namespace {

std::string unquote(std::string v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    return v.substr(1, v.size() - 2);
  }
  return v;
}

template <class T>
T parse_number(std::string_view text, std::string_view what) {
  T v{};
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (text.empty() || ec != std::errc() || ptr != last) {
    throw InputError(std::string(what) + ": not a valid number: '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

std::int64_t parse_int(std::string_view text, std::string_view what) {
  return parse_number<std::int64_t>(text, what);
}

std::uint64_t parse_u64(std::string_view text, std::string_view what) {
  return parse_number<std::uint64_t>(text, what);
}

double parse_real(std::string_view text, std::string_view what) { return parse_number<double>(text, what); }

Config Config::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw InputError("cannot open config file: " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::filesystem::path base = file.parent_path();
  if (base.empty()) base = ".";
  return parse(ss.str(), base);
}

Config Config::parse(std::string_view text, std::filesystem::path base_dir) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  Config c;
  c.base_dir_ = std::move(base_dir);
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      c.values_[name] = unquote(node.data());
    } else {
      for (const auto& [key, leaf] : node) c.values_[name + "." + key] = unquote(leaf.data());
    }
  }
  return c;
}

std::optional<std::string> Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_or(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  const auto v = get(key);
  return v ? parse_int(*v, key) : fallback;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto v = get(key);
  return v ? parse_u64(*v, key) : fallback;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  return v ? parse_real(*v, key) : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw InputError(key + ": expected true or false, got '" + *v + "'");
}

std::map<std::string, std::string> Config::section(const std::string& prefix) const {
  std::map<std::string, std::string> out;
  const std::string p = prefix + ".";
  for (auto it = values_.lower_bound(p); it != values_.end() && it->first.compare(0, p.size(), p) == 0; ++it) {
    out[it->first.substr(p.size())] = it->second;
  }
  return out;
}

std::filesystem::path Config::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir_ / p;
}

SusceptibilityProfile load_profile(const std::filesystem::path& file) {
  const Config c = Config::load(file);
  return parse_profile(c.values());
}

}  // namespace glitchsim
