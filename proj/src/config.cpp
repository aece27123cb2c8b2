#include "attredit/config.hpp"

#include <cstdio>
#include <fstream>

namespace attredit {

void Config::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError(cat("cannot read config file ", path));
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos || line[a] == '#') continue;
    size_t eq = line.find('=', a);
    if (eq == std::string::npos)
      throw FormatError(cat(path, ":", lineno, ": expected key=value"));
    auto trim = [](std::string s) {
      size_t b = s.find_first_not_of(" \t\r");
      size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string()
                                    : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(a, eq - a));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw FormatError(cat(path, ":", lineno, ": empty key"));
    // CLI overrides win; do not clobber them.
    auto it = values_.find(key);
    if (it == values_.end() || it->second.second < 2)
      values_[key] = {val, kFile};
  }
}

std::string Config::format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace attredit
