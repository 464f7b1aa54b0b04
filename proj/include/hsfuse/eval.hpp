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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hsfuse/model.hpp"
#include "hsfuse/sample.hpp"
#include "hsfuse/vocab.hpp"

namespace hsfuse {

/// Fraction of samples whose label is among the first min(k, C) entries of
/// its ranking. Throws UsageError on a short or repeating ranking.
double top_k_accuracy(std::span<const std::vector<std::size_t>> rankings,
                      std::span<const std::size_t> labels, std::size_t k,
                      std::size_t num_classes);

/// Fraction of predictions sharing the first `level` digits (2, 4 or 6)
/// with the label. Throws ValidationError on a malformed code.
double hierarchical_accuracy(std::span<const std::string> predicted,
                             std::span<const std::string> labels, int level);

struct ClassStats {
  std::string hs6;
  std::size_t support = 0;
  std::size_t top1_hits = 0;

  friend bool operator==(const ClassStats&, const ClassStats&) = default;
};

struct TopK {
  std::size_t k;
  double accuracy;

  friend bool operator==(const TopK&, const TopK&) = default;
};

struct EvalReport {
  std::string split;
  std::size_t n = 0;
  std::vector<TopK> topk;  // ascending k
  double hs2_top1 = 0.0;
  double hs4_top1 = 0.0;
  double hs6_top1 = 0.0;
  std::vector<ClassStats> per_class;  // vocabulary order

  double accuracy_at(std::size_t k) const;

  /// Single-record JSON document; from_json inverts it exactly.
  std::string to_json() const;
  static EvalReport from_json(std::string_view text);

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport evaluate_model(const ModelParams& params, const ModelConfig& cfg,
                          std::span<const LabeledSample> samples,
                          std::span<const std::size_t> ks, const LabelVocab& vocab,
                          std::string split_name = "test");

/// A report with the row labels shown in the comparison table.
struct LabeledReport {
  std::string fusion;
  std::string modalities;
  EvalReport report;
};

/// Fusion | Modality | k=1 | k=3 | k=5 table. With more than one row, the
/// best value in each k column is marked '*' and the runner-up '+'.
std::string format_table(std::span<const LabeledReport> rows);

/// Per-class support and top-1 hits plus the HS2/HS4/HS6 line.
std::string format_details(const EvalReport& report);

}  // namespace hsfuse
