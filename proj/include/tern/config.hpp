/*
 * Copyright (c) 2026 The tern authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tern/common.hpp"

namespace tern {

// Plain key=value configuration. '#' starts a comment, blank lines are
// skipped. Reads are tracked so leftover (misspelled) keys can be rejected
// once the consumer is done.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config '" + path + "'");
    Config cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
      ++line_no;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const std::size_t eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config '" + path + "' line " + std::to_string(line_no) +
                          ": expected key=value");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty())
        throw ConfigError("config '" + path + "' line " + std::to_string(line_no) +
                          ": empty key");
      if (!cfg.kv_.emplace(key, value).second)
        throw ConfigError("config '" + path + "' line " + std::to_string(line_no) +
                          ": duplicate key '" + key + "'");
    }
    return cfg;
  }

  // Override (or add) one key, e.g. from a command-line key=value argument.
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  static std::pair<std::string, std::string> split_override(const std::string& arg) {
    const std::size_t eq = arg.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override '" + arg + "' is not key=value");
    return {trim(arg.substr(0, eq)), trim(arg.substr(eq + 1))};
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string get_str(const std::string& key, const std::string& fallback) const {
    touch(key);
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  std::string require_str(const std::string& key) const {
    touch(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("config key '" + key + "' is required");
    return it->second;
  }

  long get_int(const std::string& key, long fallback) const {
    touch(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    return parse_int(key, it->second);
  }

  double get_double(const std::string& key, double fallback) const {
    touch(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    return parse_double(key, it->second);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    touch(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "on") return true;
    if (it->second == "false" || it->second == "0" || it->second == "off") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + it->second + "'");
  }

  // Comma-separated doubles, e.g. "0.05,0.1".
  std::vector<double> get_double_list(const std::string& key) const {
    touch(key);
    auto it = kv_.find(key);
    std::vector<double> out;
    if (it == kv_.end()) return out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ','))
      out.push_back(parse_double(key, trim(item)));
    return out;
  }

  // Comma-separated "epoch:factor" pairs, e.g. "80:0.1,120:0.1".
  std::vector<std::pair<int, double>> get_milestones(const std::string& key) const {
    touch(key);
    auto it = kv_.find(key);
    std::vector<std::pair<int, double>> out;
    if (it == kv_.end()) return out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const std::size_t colon = item.find(':');
      if (colon == std::string::npos)
        throw ConfigError("config key '" + key + "': milestone '" + item +
                          "' is not epoch:factor");
      out.emplace_back(static_cast<int>(parse_int(key, trim(item.substr(0, colon)))),
                       parse_double(key, trim(item.substr(colon + 1))));
    }
    return out;
  }

  // Complains about keys that were never read: catches typos early.
  void reject_unknown() const {
    std::string bad;
    for (const auto& [key, value] : kv_)
      if (!touched_.count(key)) bad += (bad.empty() ? "" : ", ") + key;
    if (!bad.empty()) throw ConfigError("unknown config keys: " + bad);
  }

 private:
  static std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }

  static long parse_int(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const long x = std::stol(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
    }
  }

  static double parse_double(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double x = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
  }

  void touch(const std::string& key) const { touched_.insert(key); }

  std::map<std::string, std::string> kv_;
  mutable std::set<std::string> touched_;
};

}  // namespace tern
