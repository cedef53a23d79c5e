// Copyright 2026 The xcodec-desk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "xcodec/error.hpp"

namespace xcodec::cli {

/// Position-tagged value from a `key = value` file.
struct IniValue {
  std::string text;
  std::size_t line = 0;
  std::size_t column = 0;  // 1-based column of the value's first character
};

/// `[section]` headers and `key = value` lines; '#' or ';' start a comment
/// line. Keys are stored as "section.key".
class IniFile {
 public:
  static IniFile parse(const std::string& text, const std::string& source) {
    IniFile f;
    f.source_ = source;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#' || line[first] == ';') continue;
      if (line[first] == '[') {
        const auto close = line.find(']', first);
        if (close == std::string::npos) f.fail(lineno, line.size() + 1, "missing ']'");
        if (line.find_first_not_of(" \t", close + 1) != std::string::npos) {
          f.fail(lineno, close + 2, "unexpected text after section header");
        }
        section = trim(line.substr(first + 1, close - first - 1));
        if (section.empty()) f.fail(lineno, first + 2, "empty section name");
        continue;
      }
      const auto eq = line.find('=', first);
      if (eq == std::string::npos) f.fail(lineno, first + 1, "expected 'key = value'");
      const std::string key = trim(line.substr(first, eq - first));
      if (key.empty()) f.fail(lineno, first + 1, "empty key");
      const auto vstart = line.find_first_not_of(" \t", eq + 1);
      if (vstart == std::string::npos) f.fail(lineno, eq + 2, "missing value for '" + key + "'");
      const std::string full = section.empty() ? key : section + "." + key;
      if (f.values_.count(full)) f.fail(lineno, first + 1, "duplicate key '" + full + "'");
      f.values_[full] = {trim(line.substr(vstart)), lineno, vstart + 1};
    }
    return f;
  }

  static IniFile load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  const std::map<std::string, IniValue>& values() const { return values_; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& source() const { return source_; }

  [[noreturn]] void fail(std::size_t line, std::size_t column, const std::string& msg) const {
    throw ConfigError(source_ + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + msg);
  }
  [[noreturn]] void fail(const IniValue& v, const std::string& msg) const {
    fail(v.line, v.column, msg);
  }

  std::string get_string(const std::string& key) const { return values_.at(key).text; }

  template <typename T>
  T get_number(const std::string& key) const {
    const IniValue& v = values_.at(key);
    T out{};
    const char* b = v.text.data();
    const char* e = b + v.text.size();
    const auto [ptr, ec] = std::from_chars(b, e, out);
    if (ec != std::errc{} || ptr != e) fail(v, "invalid number '" + v.text + "' for " + key);
    return out;
  }

  bool get_bool(const std::string& key) const {
    const IniValue& v = values_.at(key);
    if (v.text == "true" || v.text == "1") return true;
    if (v.text == "false" || v.text == "0") return false;
    fail(v, "expected true/false for " + key);
  }

  std::vector<int> get_int_list(const std::string& key) const {
    const IniValue& v = values_.at(key);
    std::vector<int> out;
    std::stringstream ss(v.text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      int x = 0;
      const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
      if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size()) {
        fail(v, "invalid integer list '" + v.text + "' for " + key);
      }
      out.push_back(x);
    }
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
  }

  std::string source_;
  std::map<std::string, IniValue> values_;
};

}  // namespace xcodec::cli
