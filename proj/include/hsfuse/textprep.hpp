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
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace hsfuse {

struct SampleRecord;

/// Unigram frequency dictionary; words are lowercase a-z.
class FreqDict {
 public:
  FreqDict() = default;
  /// Throws ValidationError on a non-letter word or a zero count.
  explicit FreqDict(std::map<std::string, std::uint64_t> counts);

  std::uint64_t count(std::string_view word) const;
  bool contains(std::string_view word) const { return count(word) > 0; }
  std::uint64_t total() const noexcept { return total_; }
  std::size_t size() const noexcept { return counts_.size(); }
  std::size_t max_word_length() const noexcept { return max_len_; }
  const std::map<std::string, std::uint64_t, std::less<>>& entries() const noexcept {
    return counts_;
  }

  /// log P(w): count/total when known, 1/(total * 10^len) otherwise.
  double log_prob(std::string_view word) const;

 private:
  std::map<std::string, std::uint64_t, std::less<>> counts_;
  std::uint64_t total_ = 0;
  std::size_t max_len_ = 0;
};

/// `word count` per line; blank lines and '#' comments ignored.
FreqDict parse_freq_dict(std::string_view text);
FreqDict load_freq_dict(const std::filesystem::path& path);

/// Lowercase, every non a-z byte to a space, whitespace collapsed, trimmed.
std::string clean_text(std::string_view s);

/// Most probable split of a run of letters under the unigram model. Ties go
/// to fewer tokens, then to the longer leading token. Throws UsageError on a
/// non-letter character.
std::vector<std::string> segment_words(std::string_view s, const FreqDict& dict);

/// Sum of log_prob over `tokens`.
double segmentation_score(const std::vector<std::string>& tokens, const FreqDict& dict);

/// Levenshtein distance (unit insert/delete/substitute).
std::size_t edit_distance(std::string_view a, std::string_view b);

/// Known word unchanged; else the most frequent word at distance 1, else at
/// distance 2 (frequency ties to the lexicographically smaller); else `t`.
std::string correct_token(std::string_view t, const FreqDict& dict);

/// clean -> segment each chunk -> correct each token -> join with spaces.
std::string preprocess_text(std::string_view s, const FreqDict& dict);

/// Applies preprocess_text to the D, T and C_cat fields.
SampleRecord preprocess_record(const SampleRecord& rec, const FreqDict& dict);

}  // namespace hsfuse
