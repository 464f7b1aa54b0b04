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
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hsfuse/fusion.hpp"
#include "hsfuse/sample.hpp"
#include "hsfuse/tensor.hpp"
#include "hsfuse/vocab.hpp"

namespace hsfuse {

/// One customs declaration from a manifest.
struct SampleRecord {
  std::string id;
  std::string hs6;  // empty when the manifest is unlabeled
  std::string description;
  std::string title;
  std::string category;
  /// Per-modality embedding id overrides; absent modalities use `id`.
  std::map<Modality, std::string> embedding_refs;
  /// Vectors carried inline (prediction inputs).
  std::map<Modality, Vec> inline_embeddings;
  std::size_t line = 0;  // 1-based source line, 0 if not from a file

  /// Text for D, T or C_cat. Throws UsageError for the image modality.
  const std::string& text(Modality m) const;
  std::string& text(Modality m);
  const std::string& embedding_ref(Modality m) const;
};

/// JSON-lines manifest: one object per line with keys id, hs6, D, T, C_cat,
/// refs (modality -> embedding id) and embeddings (modality -> values).
/// Throws ValidationError citing the line for a bad hs6, a duplicate id, a
/// missing field or malformed JSON.
std::vector<SampleRecord> parse_manifest_text(std::string_view text, bool require_label = true);
std::vector<SampleRecord> parse_manifest(const std::filesystem::path& path,
                                         bool require_label = true);
std::string manifest_line(const SampleRecord& record);
void write_manifest(std::span<const SampleRecord> records, const std::filesystem::path& path);

/// Vectors for one modality keyed by record id, in file order.
class EmbeddingTable {
 public:
  EmbeddingTable(Modality modality, std::size_t dim) : modality_(modality), dim_(dim) {}

  Modality modality() const noexcept { return modality_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  /// Throws FormatError on a wrong dim, non-finite value or repeated id.
  void insert(std::string id, Vec values);
  const Vec* find(std::string_view id) const;

  friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b);

 private:
  Modality modality_;
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, Vec> rows_;
};

/// `#embeddings v1 modality=<name> dim=<d> count=<n>` then `<id> <values>`.
EmbeddingTable parse_embedding_text(std::string_view text, std::string_view source = "<memory>");
EmbeddingTable read_embedding_file(const std::filesystem::path& path);
std::string serialize_embedding_table(const EmbeddingTable& table);
void write_embedding_file(const EmbeddingTable& table, const std::filesystem::path& path);

/// Distinct codes sorted lexicographically. Throws UsageError when empty.
LabelVocab build_label_vocab(std::span<const SampleRecord> records);

enum class Split { kTrain, kVal, kTest };
std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitAssignment {
  std::unordered_map<std::string, Split> by_id;
  std::uint64_t seed = 0;
  SplitRatios ratios;

  std::size_t count(Split s) const;
};

/// Seeded shuffle; val and test get floor(ratio * n), train the remainder.
/// With `stratified` the rule is applied within each label.
SplitAssignment split_dataset(std::span<const SampleRecord> records, SplitRatios ratios,
                              std::uint64_t seed, bool stratified = false);

struct Dataset {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> val;
  std::vector<LabeledSample> test;

  const std::vector<LabeledSample>& get(Split s) const;
};

/// Joins records with one table per modality (in `modalities` order) and
/// label-encodes them. Throws JoinError "<id>/<modality>" for a missing
/// vector.
Dataset assemble_dataset(std::span<const SampleRecord> records,
                         std::span<const EmbeddingTable> tables,
                         const LabelVocab& vocab, const SplitAssignment& split);

}  // namespace hsfuse
