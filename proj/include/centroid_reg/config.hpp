#pragma once

// Plain-text configuration: one `key = value` per line, `#` starts a comment,
// blank lines are ignored. Keys are case-sensitive.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "centroid_reg/binary_io.hpp"
#include "centroid_reg/errors.hpp"

namespace centroid_reg {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text) {
    KeyValueConfig cfg;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
      auto eol = text.find('\n', pos);
      if (eol == std::string_view::npos) eol = text.size();
      auto line = text.substr(pos, eol - pos);
      pos = eol + 1;
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw FormatError(FormatError::Kind::malformed_text,
                          "config line " + std::to_string(line_no) + ": expected 'key = value'");
      }
      const auto key = trim(line.substr(0, eq));
      const auto value = trim(line.substr(eq + 1));
      if (key.empty()) {
        throw FormatError(FormatError::Kind::malformed_text, "config line " + std::to_string(line_no) + ": empty key");
      }
      if (!cfg.values_.emplace(std::string(key), std::string(value)).second) {
        throw FormatError(FormatError::Kind::malformed_text,
                          "config line " + std::to_string(line_no) + ": duplicate key '" + std::string(key) + "'");
      }
    }
    return cfg;
  }

  static KeyValueConfig load(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  }

  bool contains(const std::string& key) const { return values_.contains(key); }
  const std::map<std::string, std::string>& entries() const noexcept { return values_; }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  /// Throws for any key outside `allowed`, so typos do not pass silently.
  void reject_unknown(const std::set<std::string, std::less<>>& allowed) const {
    for (const auto& [key, value] : values_) {
      if (!allowed.contains(key)) throw ValidationError("unknown config key '" + key + "'");
    }
  }

  std::optional<std::string> get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto v = get(key);
    return v ? to_double(key, *v) : fallback;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    const auto res = std::from_chars(v->data(), v->data() + v->size(), out);
    if (res.ec != std::errc() || res.ptr != v->data() + v->size()) {
      throw ValidationError("config key '" + key + "': '" + *v + "' is not a non-negative integer");
    }
    return out;
  }

  std::string get_string(const std::string& key, std::string fallback) const {
    auto v = get(key);
    return v ? *v : std::move(fallback);
  }

 private:
  static std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
  }

  static double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
      throw ValidationError("config key '" + key + "': '" + v + "' is not a number");
    }
    return out;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace centroid_reg
