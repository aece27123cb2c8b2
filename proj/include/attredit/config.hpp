#pragma once

// Flat key=value configuration with three layers of precedence:
// command-line override > config file > built-in default. Every lookup is
// recorded with its origin so a run can print the fully resolved config,
// and keys that were supplied but never consumed are reported as errors.

#include <algorithm>
#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "attredit/common.hpp"

namespace attredit {

class Config {
 public:
  // Lines "key=value"; blank lines and lines starting with '#' skipped.
  void load_file(const std::string& path);

  void set_override(const std::string& key, const std::string& value) {
    values_[key] = {value, kCli};
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string gets(const std::string& key, const std::string& dflt) {
    auto it = values_.find(key);
    if (it == values_.end()) return resolve(key, dflt, kDefault);
    return resolve(key, it->second.first, it->second.second);
  }

  int64_t geti(const std::string& key, int64_t dflt) {
    std::string s = gets(key, std::to_string(dflt));
    try {
      size_t pos = 0;
      int64_t v = std::stoll(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw UsageError(cat("config: ", key, "=", s, " is not an integer"));
    }
  }

  uint64_t getu(const std::string& key, uint64_t dflt) {
    std::string s = gets(key, std::to_string(dflt));
    try {
      size_t pos = 0;
      uint64_t v = std::stoull(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw UsageError(
          cat("config: ", key, "=", s, " is not an unsigned integer"));
    }
  }

  double getd(const std::string& key, double dflt) {
    std::string s = gets(key, format_double(dflt));
    try {
      size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw UsageError(cat("config: ", key, "=", s, " is not a number"));
    }
  }

  bool getb(const std::string& key, bool dflt) {
    std::string s = gets(key, dflt ? "1" : "0");
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw UsageError(cat("config: ", key, "=", s, " is not a boolean"));
  }

  // Keys present in file/CLI that no getter ever consumed.
  std::vector<std::string> unknown_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!accessed_.count(k)) out.push_back(k);
    return out;
  }

  void print_resolved(std::ostream& os) const {
    os << "# resolved config (origin: cli > file > default)\n";
    for (const auto& [key, val, origin] : resolved_)
      os << key << "=" << val << "\t# " << origin << "\n";
  }

 private:
  enum Origin { kDefault = 0, kFile = 1, kCli = 2 };

  static std::string format_double(double v);

  std::string resolve(const std::string& key, const std::string& value,
                      int origin) {
    if (!accessed_.count(key)) {
      static const char* names[] = {"default", "file", "cli"};
      resolved_.emplace_back(key, value, names[origin]);
      accessed_.insert(key);
    }
    return value;
  }

  std::map<std::string, std::pair<std::string, int>> values_;
  std::set<std::string> accessed_;
  std::vector<std::tuple<std::string, std::string, std::string>> resolved_;
};

}  // namespace attredit
