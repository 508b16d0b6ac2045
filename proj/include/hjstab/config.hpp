#pragma once

#include <cctype>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hjstab/csv.hpp"

namespace hjstab {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sectioned key-value text:
//
//   [train]
//   rate = 3.01e-4
//
// Sections may nest with dots ([model.f]); keys are addressed by their full
// dotted path ("train.rate"). Values keep their source spelling so that
// parse -> serialize -> parse is the identity on the stored data.
class Config {
 public:
  struct Entry {
    std::string key;
    std::string value;
    int line = 0;
  };

  static Config parse(const std::string& text) {
    Config cfg;
    std::string section;
    int line_no = 0;
    std::istringstream stream(text);
    for (const std::string& raw : read_lines(stream)) {
      ++line_no;
      std::string line = trim(raw);
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      if (line.front() == '[') {
        if (line.back() != ']') {
          throw ConfigError("config line " + std::to_string(line_no) +
                            ": unterminated section header");
        }
        section = trim(line.substr(1, line.size() - 2));
        if (!valid_path(section)) {
          throw ConfigError("config line " + std::to_string(line_no) +
                            ": invalid section name '" + section + "'");
        }
        continue;
      }
      std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": expected 'key = value' or '[section]', got '" + line + "'");
      }
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (!valid_path(key)) {
        throw ConfigError("config line " + std::to_string(line_no) + ": invalid key '" + key +
                          "'");
      }
      std::string full = section.empty() ? key : section + "." + key;
      if (const Entry* prior = cfg.find(full)) {
        throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + full +
                          "' (first set on line " + std::to_string(prior->line) + ")");
      }
      cfg.entries_.push_back({full, value, line_no});
    }
    return cfg;
  }

  // Groups keys back under section headers, longest shared prefix first-wins:
  // the section of "a.b.c" is "a.b". Entries keep first-appearance order
  // within their section; sections appear in first-use order.
  std::string serialize() const {
    std::string out;
    std::vector<std::string> sections;
    for (const Entry& e : entries_) {
      std::string s = section_of(e.key);
      bool seen = false;
      for (const std::string& prior : sections) seen = seen || prior == s;
      if (!seen) sections.push_back(s);
    }
    bool first = true;
    for (const std::string& s : sections) {
      if (!s.empty()) {
        if (!first) out += "\n";
        out += "[" + s + "]\n";
      }
      first = false;
      for (const Entry& e : entries_) {
        if (section_of(e.key) != s) continue;
        out += leaf_of(e.key) + " = " + e.value + "\n";
      }
    }
    return out;
  }

  bool has(const std::string& key) const { return find(key) != nullptr; }

  void set(const std::string& key, const std::string& value) {
    if (!valid_path(key)) throw ConfigError("config: invalid key '" + key + "'");
    if (Entry* e = find(key)) {
      e->value = value;
      return;
    }
    entries_.push_back({key, value, 0});
  }

  std::string get_string(const std::string& key) const { return require(key).value; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const Entry* e = find(key);
    return e ? e->value : fallback;
  }

  double get_double(const std::string& key) const { return to_double(require(key)); }

  double get_double(const std::string& key, double fallback) const {
    const Entry* e = find(key);
    return e ? to_double(*e) : fallback;
  }

  long long get_int(const std::string& key) const { return to_int(require(key)); }

  long long get_int(const std::string& key, long long fallback) const {
    const Entry* e = find(key);
    return e ? to_int(*e) : fallback;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    long long v = to_int(*e);
    if (v < 0) throw ConfigError(where(*e) + ": expected a non-negative integer");
    return static_cast<std::uint64_t>(v);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    if (e->value == "true" || e->value == "1") return true;
    if (e->value == "false" || e->value == "0") return false;
    throw ConfigError(where(*e) + ": expected true/false, got '" + e->value + "'");
  }

  std::vector<double> get_doubles(const std::string& key) const {
    const Entry& e = require(key);
    std::vector<double> out;
    for (const std::string& piece : split_csv_line(e.value)) {
      std::string p = trim(piece);
      if (p.empty()) continue;
      out.push_back(parse_number(e, p));
    }
    return out;
  }

  std::vector<int> get_ints(const std::string& key, std::vector<int> fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    std::vector<int> out;
    for (const std::string& piece : split_csv_line(e->value)) {
      std::string p = trim(piece);
      if (p.empty()) continue;
      double v = parse_number(*e, p);
      long long i = static_cast<long long>(v);
      if (static_cast<double>(i) != v) {
        throw ConfigError(where(*e) + ": expected an integer list, got '" + p + "'");
      }
      out.push_back(static_cast<int>(i));
    }
    return out;
  }

  const std::vector<Entry>& entries() const { return entries_; }

  // Keys present in the file but not in `known` — catches typos early.
  std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const {
    std::vector<std::string> out;
    for (const Entry& e : entries_) {
      bool ok = false;
      for (const std::string& k : known) ok = ok || k == e.key;
      if (!ok) out.push_back(e.key + " (line " + std::to_string(e.line) + ")");
    }
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  static bool valid_path(const std::string& s) {
    if (s.empty() || s.front() == '.' || s.back() == '.') return false;
    for (char c : s) {
      bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
      if (!ok) return false;
    }
    return s.find("..") == std::string::npos;
  }

  static std::string section_of(const std::string& key) {
    std::size_t dot = key.rfind('.');
    return dot == std::string::npos ? std::string() : key.substr(0, dot);
  }

  static std::string leaf_of(const std::string& key) {
    std::size_t dot = key.rfind('.');
    return dot == std::string::npos ? key : key.substr(dot + 1);
  }

  static std::string where(const Entry& e) {
    if (e.line > 0) return "config key '" + e.key + "' (line " + std::to_string(e.line) + ")";
    return "config key '" + e.key + "'";
  }

  static double parse_number(const Entry& e, const std::string& text) {
    try {
      return parse_double(text);
    } catch (const std::exception&) {
      throw ConfigError(where(e) + ": expected a number, got '" + text + "'");
    }
  }

  static double to_double(const Entry& e) { return parse_number(e, e.value); }

  static long long to_int(const Entry& e) {
    double v = parse_number(e, e.value);
    long long i = static_cast<long long>(v);
    if (static_cast<double>(i) != v) {
      throw ConfigError(where(e) + ": expected an integer, got '" + e.value + "'");
    }
    return i;
  }

  const Entry* find(const std::string& key) const {
    for (const Entry& e : entries_) {
      if (e.key == key) return &e;
    }
    return nullptr;
  }

  Entry* find(const std::string& key) {
    for (Entry& e : entries_) {
      if (e.key == key) return &e;
    }
    return nullptr;
  }

  const Entry& require(const std::string& key) const {
    const Entry* e = find(key);
    if (!e) throw ConfigError("config: missing required key '" + key + "'");
    return *e;
  }

  std::vector<Entry> entries_;
};

}  // namespace hjstab
