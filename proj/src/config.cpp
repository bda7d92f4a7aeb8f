// Copyright 2026 The adasketch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "adasketch/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

namespace adasketch {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

double parse_double(const std::string& section, const std::string& key,
                    const std::string& value) {
  if (value == "inf" || value == "+inf") {
    return std::numeric_limits<double>::infinity();
  }
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for " + section + "." + key,
                      {section + "." + key});
  }
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError("config: malformed section header at line " +
                          std::to_string(lineno));
      }
      section = trim(line.substr(1, line.size() - 2));
      cfg.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: expected key = value at line " +
                        std::to_string(lineno));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config: empty key at line " + std::to_string(lineno));
    }
    cfg.sections_[section][key] = value;
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  const auto sec = sections_.find(section);
  return sec != sections_.end() && sec->second.count(key) > 0;
}

std::string ConfigFile::get_string(const std::string& section,
                                   const std::string& key,
                                   const std::string& fallback) const {
  const auto sec = sections_.find(section);
  if (sec == sections_.end()) return fallback;
  const auto it = sec->second.find(key);
  return it == sec->second.end() ? fallback : it->second;
}

std::string ConfigFile::require_string(const std::string& section,
                                       const std::string& key) const {
  if (!has(section, key)) {
    throw ConfigError("config: missing required key " + section + "." + key,
                      {section + "." + key});
  }
  return get_string(section, key, "");
}

double ConfigFile::get_double(const std::string& section,
                              const std::string& key, double fallback) const {
  if (!has(section, key)) return fallback;
  return parse_double(section, key, get_string(section, key, ""));
}

long ConfigFile::get_long(const std::string& section, const std::string& key,
                          long fallback) const {
  if (!has(section, key)) return fallback;
  const std::string value = get_string(section, key, "");
  long out = 0;
  const auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config: bad integer for " + section + "." + key,
                      {section + "." + key});
  }
  return out;
}

std::uint64_t ConfigFile::get_u64(const std::string& section,
                                  const std::string& key,
                                  std::uint64_t fallback) const {
  if (!has(section, key)) return fallback;
  const std::string value = get_string(section, key, "");
  std::uint64_t out = 0;
  const auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config: bad integer for " + section + "." + key,
                      {section + "." + key});
  }
  return out;
}

std::vector<double> ConfigFile::get_double_list(const std::string& section,
                                                const std::string& key) const {
  std::vector<double> out;
  for (const std::string& tok : split_ws(get_string(section, key, ""))) {
    out.push_back(parse_double(section, key, tok));
  }
  return out;
}

std::vector<std::uint64_t> ConfigFile::get_u64_list(
    const std::string& section, const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (const std::string& tok : split_ws(get_string(section, key, ""))) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw ConfigError("config: bad integer list for " + section + "." + key,
                        {section + "." + key});
    }
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> ConfigFile::unknown_keys(
    const std::map<std::string, std::vector<std::string>>& schema) const {
  std::vector<std::string> unknown;
  for (const auto& [section, kv] : sections_) {
    const auto allowed = schema.find(section);
    if (allowed == schema.end()) {
      unknown.push_back("[" + section + "]");
      continue;
    }
    for (const auto& [key, value] : kv) {
      if (std::find(allowed->second.begin(), allowed->second.end(), key) ==
          allowed->second.end()) {
        unknown.push_back(section + "." + key);
      }
    }
  }
  return unknown;
}

}  // namespace adasketch
