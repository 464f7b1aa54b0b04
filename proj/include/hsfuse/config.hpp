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

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Small text helpers shared by the config, checkpoint and file readers.
// Parse failures throw UsageError; callers rethrow with file context.

namespace hsfuse {

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
/// Splits on runs of spaces/tabs, dropping empties.
std::vector<std::string_view> split_ws(std::string_view s);

std::uint64_t parse_u64(std::string_view text, std::string_view what);
double parse_double(std::string_view text, std::string_view what);
bool parse_bool(std::string_view text, std::string_view what);

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// "a=1 b=2" -> {{a,1},{b,2}}.
KeyValues parse_record(std::string_view line);

/// Flat `key = value` lines; '#' starts a comment; blank lines ignored.
/// Repeated keys keep the last value. Errors name the line number.
KeyValues parse_key_value_text(std::string_view text);

}  // namespace hsfuse
