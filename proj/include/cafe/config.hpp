#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cafe/common.hpp"

namespace cafe {

// Flat INI-style config: `[section]` headers, `key = value` lines, `#`
// comments. Keys are addressed as "section.key"; top-level keys have no
// section prefix.
class KvConfig {
 public:
  static KvConfig parse_file(const std::string& path);
  static KvConfig parse_string(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_f64(const std::string& key) const;
  double get_f64(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_f64_list(const std::string& key) const;
  std::vector<std::uint64_t> get_u64_list(const std::string& key) const;
  std::vector<double> get_f64_list(const std::string& key, const std::vector<double>& fb) const;
  std::vector<std::uint64_t> get_u64_list(const std::string& key,
                                          const std::vector<std::uint64_t>& fb) const;

  void set(const std::string& key, const std::string& value);

  const std::string& text() const { return text_; }
  std::uint64_t hash() const;  // FNV-1a over the raw text

 private:
  std::map<std::string, std::string> values_;
  std::string text_;
};

}  // namespace cafe
