#include "cafe/config.hpp"

#include <fstream>
#include <sstream>

namespace cafe {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

KvConfig KvConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

KvConfig KvConfig::parse_string(const std::string& text) {
  KvConfig cfg;
  cfg.text_ = text;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) +
                                                ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    cfg.values_[section.empty() ? key : section + "." + key] = value;
  }
  return cfg;
}

std::string KvConfig::get_str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing required config field: " + key);
  return it->second;
}

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::uint64_t KvConfig::get_u64(const std::string& key) const {
  const std::string v = get_str(key);
  try {
    std::size_t used = 0;
    std::uint64_t r = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config field " + key + ": expected unsigned integer, got '" + v + "'");
  }
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? get_u64(key) : fallback;
}

double KvConfig::get_f64(const std::string& key) const {
  const std::string v = get_str(key);
  try {
    std::size_t used = 0;
    double r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config field " + key + ": expected number, got '" + v + "'");
  }
}

double KvConfig::get_f64(const std::string& key, double fallback) const {
  return has(key) ? get_f64(key) : fallback;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  std::string v = get_str(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config field " + key + ": expected boolean, got '" + v + "'");
}

std::vector<double> KvConfig::get_f64_list(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& item : split_list(get_str(key))) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("config field " + key + ": bad list element '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("config field " + key + ": empty list");
  return out;
}

std::vector<std::uint64_t> KvConfig::get_u64_list(const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (const std::string& item : split_list(get_str(key))) {
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw ConfigError("config field " + key + ": bad list element '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("config field " + key + ": empty list");
  return out;
}

std::vector<double> KvConfig::get_f64_list(const std::string& key,
                                           const std::vector<double>& fb) const {
  return has(key) ? get_f64_list(key) : fb;
}

std::vector<std::uint64_t> KvConfig::get_u64_list(const std::string& key,
                                                  const std::vector<std::uint64_t>& fb) const {
  return has(key) ? get_u64_list(key) : fb;
}

void KvConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
  text_ += key + " = " + value + "\n";
}

std::uint64_t KvConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text_) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace cafe
