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

#ifndef ADASKETCH_CONFIG_HPP_
#define ADASKETCH_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace adasketch {

// Flat key/value configuration with [section] headers, '#' comments, and
// space-separated lists. This is the one canonical config serialization for
// the experiment driver.

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what,
                       std::vector<std::string> issues = {})
      : std::runtime_error(what), issues_(std::move(issues)) {}
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text);
  static ConfigFile load(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  std::string require_string(const std::string& section,
                             const std::string& key) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  long get_long(const std::string& section, const std::string& key,
                long fallback) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback) const;
  std::vector<double> get_double_list(const std::string& section,
                                      const std::string& key) const;
  std::vector<std::uint64_t> get_u64_list(const std::string& section,
                                          const std::string& key) const;

  // Unknown-key detection against a per-section whitelist; returns
  // "section.key" strings for anything not listed.
  std::vector<std::string> unknown_keys(
      const std::map<std::string, std::vector<std::string>>& schema) const;

  const std::map<std::string, std::map<std::string, std::string>>& sections()
      const {
    return sections_;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace adasketch

#endif  // ADASKETCH_CONFIG_HPP_
