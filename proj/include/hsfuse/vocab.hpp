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

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hsfuse {

/// True for exactly six ASCII digits.
bool is_hs6(std::string_view code);

/// Index <-> HS6 code mapping. Codes are distinct and kept in index order.
class LabelVocab {
 public:
  LabelVocab() = default;
  /// Throws ValidationError on a malformed or repeated code.
  explicit LabelVocab(std::vector<std::string> codes);

  std::size_t size() const noexcept { return codes_.size(); }
  bool empty() const noexcept { return codes_.empty(); }
  const std::string& code(std::size_t index) const { return codes_.at(index); }
  const std::vector<std::string>& codes() const noexcept { return codes_; }
  std::optional<std::size_t> index_of(std::string_view code) const;

  friend bool operator==(const LabelVocab& a, const LabelVocab& b) {
    return a.codes_ == b.codes_;
  }

 private:
  std::vector<std::string> codes_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace hsfuse
