// Copyright 2026 The hsfuse Authors
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

#include "hsfuse/config.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>

#include "hsfuse/errors.hpp"

namespace hsfuse {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::uint64_t parse_u64(std::string_view text, std::string_view what) {
  text = trim(text);
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw UsageError(std::string(what) + ": expected a non-negative integer, got '" +
                     std::string(text) + "'");
  }
  return value;
}

double parse_double(std::string_view text, std::string_view what) {
  const std::string s(trim(text));
  if (s.empty()) throw UsageError(std::string(what) + ": expected a number, got ''");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) {
    throw UsageError(std::string(what) + ": expected a number, got '" + s + "'");
  }
  return v;
}

bool parse_bool(std::string_view text, std::string_view what) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw UsageError(std::string(what) + ": expected true/false, got '" +
                   std::string(text) + "'");
}

KeyValues parse_record(std::string_view line) {
  KeyValues out;
  for (auto token : split_ws(trim(line))) {
    const auto eq = token.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw UsageError("expected key=value, got '" + std::string(token) + "'");
    }
    out.emplace_back(std::string(token.substr(0, eq)), std::string(token.substr(eq + 1)));
  }
  return out;
}

KeyValues parse_key_value_text(std::string_view text) {
  KeyValues out;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError("line " + std::to_string(line_no) + ": expected key=value");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw UsageError("line " + std::to_string(line_no) + ": empty key");
    }
    bool replaced = false;
    for (auto& kv : out) {
      if (kv.first == key) {
        kv.second = std::string(trim(line.substr(eq + 1)));
        replaced = true;
      }
    }
    if (!replaced) out.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

}  // namespace hsfuse
