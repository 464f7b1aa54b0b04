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

#include "hsfuse/textprep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hsfuse/config.hpp"
#include "hsfuse/data.hpp"
#include "hsfuse/errors.hpp"
#include "hsfuse/model.hpp"

namespace hsfuse {

namespace {

bool is_lower_alpha(char c) { return c >= 'a' && c <= 'z'; }

bool all_lower_alpha(std::string_view s) {
  return std::all_of(s.begin(), s.end(), is_lower_alpha);
}

// Scores closer than this are treated as equal so that tie-breaking does not
// depend on summation order.
constexpr double kScoreTolerance = 1e-9;

}  // namespace

FreqDict::FreqDict(std::map<std::string, std::uint64_t> counts) {
  for (auto& [word, count] : counts) {
    if (word.empty() || !all_lower_alpha(word)) {
      throw ValidationError("dictionary word '" + word + "' is not lowercase letters");
    }
    if (count == 0) throw ValidationError("dictionary word '" + word + "' has count 0");
    total_ += count;
    max_len_ = std::max(max_len_, word.size());
    counts_.emplace(word, count);
  }
}

std::uint64_t FreqDict::count(std::string_view word) const {
  const auto it = counts_.find(word);
  return it == counts_.end() ? 0 : it->second;
}

double FreqDict::log_prob(std::string_view word) const {
  const double total = static_cast<double>(std::max<std::uint64_t>(total_, 1));
  if (const auto c = count(word); c > 0) return std::log(static_cast<double>(c) / total);
  return -std::log(total) - static_cast<double>(word.size()) * std::log(10.0);
}

FreqDict parse_freq_dict(std::string_view text) {
  std::map<std::string, std::uint64_t> counts;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto fields = split_ws(trim(line));
    if (fields.empty()) continue;
    if (fields.size() != 2) {
      throw ValidationError("dictionary line " + std::to_string(line_no) + ": expected 'word count'");
    }
    std::uint64_t c = 0;
    try {
      c = parse_u64(fields[1], "count");
    } catch (const UsageError& e) {
      throw ValidationError("dictionary line " + std::to_string(line_no) + ": " + e.what());
    }
    counts[std::string(fields[0])] += c;
  }
  return FreqDict(std::move(counts));
}

FreqDict load_freq_dict(const std::filesystem::path& path) {
  return parse_freq_dict(read_file(path));
}

std::string clean_text(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char raw : s) {
    char c = raw;
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (is_lower_alpha(c)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    } else {
      pending_space = true;
    }
  }
  return out;
}

std::vector<std::string> segment_words(std::string_view s, const FreqDict& dict) {
  if (!all_lower_alpha(s)) {
    throw UsageError("segment_words: input must be lowercase letters only");
  }
  const std::size_t n = s.size();
  // best[i]: optimum for the suffix s[i:], compared by (score, -tokens,
  // first-token length).
  struct Best {
    double score = -std::numeric_limits<double>::infinity();
    std::size_t tokens = 0;
    std::size_t first_len = 0;
  };
  std::vector<Best> best(n + 1);
  best[n] = {0.0, 0, 0};
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t len = 1; i + len <= n; ++len) {
      const double score = dict.log_prob(s.substr(i, len)) + best[i + len].score;
      const std::size_t tokens = best[i + len].tokens + 1;
      Best& cur = best[i];
      bool better;
      if (score > cur.score + kScoreTolerance) {
        better = true;
      } else if (score < cur.score - kScoreTolerance) {
        better = false;
      } else if (tokens != cur.tokens) {
        better = tokens < cur.tokens;
      } else {
        better = len > cur.first_len;
      }
      if (better) cur = {score, tokens, len};
    }
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; i += best[i].first_len) {
    out.emplace_back(s.substr(i, best[i].first_len));
  }
  return out;
}

double segmentation_score(const std::vector<std::string>& tokens, const FreqDict& dict) {
  double score = 0.0;
  for (const auto& t : tokens) score += dict.log_prob(t);
  return score;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace {

// Levenshtein distance if it is <= cap, otherwise cap + 1. Uses a band of
// width 2*cap+1 around the diagonal.
std::size_t bounded_distance(std::string_view a, std::string_view b, std::size_t cap) {
  const std::size_t la = a.size();
  const std::size_t lb = b.size();
  if ((la > lb ? la - lb : lb - la) > cap) return cap + 1;
  const std::size_t inf = cap + 1;
  std::vector<std::size_t> prev(lb + 1, inf);
  std::vector<std::size_t> cur(lb + 1, inf);
  for (std::size_t j = 0; j <= std::min(lb, cap); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= la; ++i) {
    const std::size_t lo = i > cap ? i - cap : 0;
    const std::size_t hi = std::min(lb, i + cap);
    std::fill(cur.begin(), cur.end(), inf);
    if (lo == 0) cur[0] = i <= cap ? i : inf;
    std::size_t row_min = cur[0];
    for (std::size_t j = std::max<std::size_t>(lo, 1); j <= hi; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub, inf});
      row_min = std::min(row_min, cur[j]);
    }
    if (row_min > cap) return inf;
    std::swap(prev, cur);
  }
  return std::min(prev[lb], inf);
}

}  // namespace

std::string correct_token(std::string_view t, const FreqDict& dict) {
  if (dict.contains(t)) return std::string(t);
  // best[d] = (count, word) of the preferred candidate at distance d.
  std::uint64_t best_count[3] = {0, 0, 0};
  const std::string* best_word[3] = {nullptr, nullptr, nullptr};
  for (const auto& [word, count] : dict.entries()) {
    const std::size_t d = bounded_distance(t, word, 2);
    if (d == 0 || d > 2) continue;
    // entries() iterates in lexicographic order, so a strict '>' keeps the
    // smaller word on a frequency tie.
    if (count > best_count[d]) {
      best_count[d] = count;
      best_word[d] = &word;
    }
  }
  if (best_word[1] != nullptr) return *best_word[1];
  if (best_word[2] != nullptr) return *best_word[2];
  return std::string(t);
}

std::string preprocess_text(std::string_view s, const FreqDict& dict) {
  const std::string cleaned = clean_text(s);
  std::string out;
  for (auto chunk : split_ws(cleaned)) {
    for (const auto& token : segment_words(chunk, dict)) {
      if (!out.empty()) out.push_back(' ');
      out += correct_token(token, dict);
    }
  }
  return out;
}

SampleRecord preprocess_record(const SampleRecord& rec, const FreqDict& dict) {
  SampleRecord out = rec;
  out.description = preprocess_text(rec.description, dict);
  out.title = preprocess_text(rec.title, dict);
  out.category = preprocess_text(rec.category, dict);
  return out;
}

}  // namespace hsfuse
