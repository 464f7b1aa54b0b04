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

#include "hsfuse/data.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "hsfuse/config.hpp"
#include "hsfuse/errors.hpp"
#include "hsfuse/model.hpp"
#include "hsfuse/random.hpp"
#include "json.hpp"

namespace hsfuse {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Vocabulary

bool is_hs6(std::string_view code) {
  return code.size() == 6 &&
         std::all_of(code.begin(), code.end(), [](char c) { return c >= '0' && c <= '9'; });
}

LabelVocab::LabelVocab(std::vector<std::string> codes) : codes_(std::move(codes)) {
  for (std::size_t i = 0; i < codes_.size(); ++i) {
    if (!is_hs6(codes_[i])) {
      throw ValidationError("label '" + codes_[i] + "' is not a 6-digit HS code");
    }
    if (!index_.emplace(codes_[i], i).second) {
      throw ValidationError("label '" + codes_[i] + "' appears twice in the vocabulary");
    }
  }
}

std::optional<std::size_t> LabelVocab::index_of(std::string_view code) const {
  const auto it = index_.find(std::string(code));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

LabelVocab build_label_vocab(std::span<const SampleRecord> records) {
  if (records.empty()) throw UsageError("build_label_vocab: no records");
  std::set<std::string> codes;
  for (const auto& r : records) {
    if (!is_hs6(r.hs6)) {
      throw ValidationError("record '" + r.id + "' has no valid hs6 label");
    }
    codes.insert(r.hs6);
  }
  return LabelVocab(std::vector<std::string>(codes.begin(), codes.end()));
}

// ---------------------------------------------------------------------------
// Manifest

const std::string& SampleRecord::text(Modality m) const {
  switch (m) {
    case Modality::kDescription: return description;
    case Modality::kTitle: return title;
    case Modality::kCategory: return category;
    case Modality::kImage: break;
  }
  throw UsageError("the image modality has no text field");
}

std::string& SampleRecord::text(Modality m) {
  return const_cast<std::string&>(std::as_const(*this).text(m));
}

const std::string& SampleRecord::embedding_ref(Modality m) const {
  const auto it = embedding_refs.find(m);
  return it == embedding_refs.end() ? id : it->second;
}

namespace {

[[noreturn]] void manifest_fail(std::size_t line, const std::string& what) {
  throw ValidationError("manifest line " + std::to_string(line) + ": " + what);
}

std::string string_field(const json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) manifest_fail(line, std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

}  // namespace

std::vector<SampleRecord> parse_manifest_text(std::string_view text, bool require_label) {
  std::vector<SampleRecord> records;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    if (trim(raw).empty()) continue;
    json obj;
    try {
      obj = json::parse(raw);
    } catch (const json::parse_error& e) {
      manifest_fail(line_no, std::string("malformed record: ") + e.what());
    }
    if (!obj.is_object()) manifest_fail(line_no, "record must be an object");

    for (const auto& [key, _] : obj.items()) {
      static const std::set<std::string> kKnown{"id", "hs6", "D", "T", "C_cat", "refs",
                                                "embeddings"};
      if (!kKnown.contains(key)) manifest_fail(line_no, "unknown field '" + key + "'");
    }

    SampleRecord rec;
    rec.line = line_no;
    rec.id = string_field(obj, "id", line_no);
    if (rec.id.empty()) manifest_fail(line_no, "missing required field 'id'");
    if (rec.id.find_first_of(" \t/") != std::string::npos) {
      manifest_fail(line_no, "id '" + rec.id + "' contains whitespace or '/'");
    }
    rec.hs6 = string_field(obj, "hs6", line_no);
    if (rec.hs6.empty()) {
      if (require_label) manifest_fail(line_no, "missing required field 'hs6'");
    } else if (!is_hs6(rec.hs6)) {
      manifest_fail(line_no, "hs6 '" + rec.hs6 + "' is not six digits");
    }
    rec.description = string_field(obj, "D", line_no);
    rec.title = string_field(obj, "T", line_no);
    rec.category = string_field(obj, "C_cat", line_no);

    if (const auto it = obj.find("refs"); it != obj.end()) {
      if (!it->is_object()) manifest_fail(line_no, "'refs' must be an object");
      for (const auto& [key, value] : it->items()) {
        if (!value.is_string()) manifest_fail(line_no, "refs." + key + " must be a string");
        try {
          rec.embedding_refs[parse_modality(key)] = value.get<std::string>();
        } catch (const UsageError& e) {
          manifest_fail(line_no, e.what());
        }
      }
    }
    if (const auto it = obj.find("embeddings"); it != obj.end()) {
      if (!it->is_object()) manifest_fail(line_no, "'embeddings' must be an object");
      for (const auto& [key, value] : it->items()) {
        Modality m{};
        try {
          m = parse_modality(key);
        } catch (const UsageError& e) {
          manifest_fail(line_no, e.what());
        }
        if (!value.is_array() || value.empty()) {
          manifest_fail(line_no, "embeddings." + key + " must be a non-empty array");
        }
        std::vector<double> values;
        for (const auto& v : value) {
          if (!v.is_number() || !std::isfinite(v.get<double>())) {
            manifest_fail(line_no, "embeddings." + key + " must hold finite numbers");
          }
          values.push_back(v.get<double>());
        }
        rec.inline_embeddings[m] = Vec(std::move(values));
      }
    }

    if (!ids.insert(rec.id).second) manifest_fail(line_no, "duplicate id '" + rec.id + "'");
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<SampleRecord> parse_manifest(const std::filesystem::path& path, bool require_label) {
  return parse_manifest_text(read_file(path), require_label);
}

std::string manifest_line(const SampleRecord& record) {
  // ordered_json keeps keys in insertion order so output is stable.
  nlohmann::ordered_json obj;
  obj["id"] = record.id;
  if (!record.hs6.empty()) obj["hs6"] = record.hs6;
  if (!record.description.empty()) obj["D"] = record.description;
  if (!record.title.empty()) obj["T"] = record.title;
  if (!record.category.empty()) obj["C_cat"] = record.category;
  if (!record.embedding_refs.empty()) {
    nlohmann::ordered_json refs = nlohmann::ordered_json::object();
    for (const auto& [m, ref] : record.embedding_refs) refs[std::string(modality_name(m))] = ref;
    obj["refs"] = refs;
  }
  if (!record.inline_embeddings.empty()) {
    nlohmann::ordered_json emb = nlohmann::ordered_json::object();
    for (const auto& [m, v] : record.inline_embeddings) {
      emb[std::string(modality_name(m))] = v.values();
    }
    obj["embeddings"] = emb;
  }
  return obj.dump();
}

void write_manifest(std::span<const SampleRecord> records, const std::filesystem::path& path) {
  std::string out;
  for (const auto& r : records) out += manifest_line(r) + "\n";
  write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// Embedding tables

void EmbeddingTable::insert(std::string id, Vec values) {
  const std::string name(modality_name(modality_));
  if (values.dim() != dim_) {
    throw FormatError("embedding '" + id + "' (" + name + ") has " +
                      std::to_string(values.dim()) + " values, expected " + std::to_string(dim_));
  }
  if (!values.all_finite()) {
    throw FormatError("embedding '" + id + "' (" + name + ") has a non-finite value");
  }
  if (rows_.contains(id)) throw FormatError("embedding '" + id + "' (" + name + ") repeated");
  ids_.push_back(id);
  rows_.emplace(std::move(id), std::move(values));
}

const Vec* EmbeddingTable::find(std::string_view id) const {
  const auto it = rows_.find(std::string(id));
  return it == rows_.end() ? nullptr : &it->second;
}

bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
  return a.modality_ == b.modality_ && a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.rows_ == b.rows_;
}

EmbeddingTable parse_embedding_text(std::string_view text, std::string_view source) {
  const std::string where(source);
  const auto lines = split(text, '\n');
  const auto header = split_ws(lines.front());
  if (header.size() != 5 || header[0] != "#embeddings" || header[1] != "v1") {
    throw FormatError(where + ": line 1 must be '#embeddings v1 modality=<name> dim=<d> count=<n>'");
  }
  std::string modality_text;
  std::size_t dim = 0;
  std::size_t count = 0;
  try {
    for (std::size_t i = 2; i < header.size(); ++i) {
      const auto eq = header[i].find('=');
      const auto key = header[i].substr(0, eq);
      const auto value = eq == std::string_view::npos ? std::string_view{} : header[i].substr(eq + 1);
      if (key == "modality") {
        modality_text = value;
      } else if (key == "dim") {
        dim = parse_u64(value, "dim");
      } else if (key == "count") {
        count = parse_u64(value, "count");
      } else {
        throw UsageError("unknown header field '" + std::string(key) + "'");
      }
    }
    if (dim == 0) throw UsageError("dim must be positive");
  } catch (const UsageError& e) {
    throw FormatError(where + ": line 1: " + e.what());
  }
  Modality modality{};
  try {
    modality = parse_modality(modality_text);
  } catch (const UsageError& e) {
    throw FormatError(where + ": line 1: " + e.what());
  }

  EmbeddingTable table(modality, dim);
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const auto fields = split_ws(trim(lines[ln]));
    if (fields.empty()) continue;
    const std::string id(fields[0]);
    if (fields.size() - 1 != dim) {
      throw FormatError(where + ": line " + std::to_string(ln + 1) + ": row '" + id + "' has " +
                        std::to_string(fields.size() - 1) + " values, header says dim=" +
                        std::to_string(dim));
    }
    std::vector<double> values(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      try {
        values[k] = parse_double(fields[k + 1], id);
      } catch (const UsageError& e) {
        throw FormatError(where + ": line " + std::to_string(ln + 1) + ": " + e.what());
      }
    }
    try {
      table.insert(id, Vec(std::move(values)));
    } catch (const FormatError& e) {
      throw FormatError(where + ": line " + std::to_string(ln + 1) + ": " + e.what());
    }
  }
  if (table.size() != count) {
    throw FormatError(where + ": header says count=" + std::to_string(count) + " but found " +
                      std::to_string(table.size()) + " rows");
  }
  return table;
}

EmbeddingTable read_embedding_file(const std::filesystem::path& path) {
  return parse_embedding_text(read_file(path), path.string());
}

std::string serialize_embedding_table(const EmbeddingTable& table) {
  std::string out = "#embeddings v1 modality=" + std::string(modality_name(table.modality())) +
                    " dim=" + std::to_string(table.dim()) +
                    " count=" + std::to_string(table.size()) + "\n";
  for (const auto& id : table.ids()) {
    out += id;
    for (double v : *table.find(id)) out += " " + format_double(v);
    out += '\n';
  }
  return out;
}

void write_embedding_file(const EmbeddingTable& table, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_embedding_table(table));
}

// ---------------------------------------------------------------------------
// Split and assembly

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val" || name == "validation") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw UsageError("unknown split '" + std::string(name) + "' (expected train, val or test)");
}

std::size_t SplitAssignment::count(Split s) const {
  return static_cast<std::size_t>(std::count_if(
      by_id.begin(), by_id.end(), [s](const auto& kv) { return kv.second == s; }));
}

namespace {

std::size_t floor_share(double ratio, std::size_t n) {
  // The epsilon keeps exact products such as 0.1 * 10 from landing just
  // below an integer.
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

void assign_group(std::vector<const SampleRecord*>& group, const SplitRatios& ratios,
                  std::mt19937_64& rng, SplitAssignment& out) {
  shuffle(std::span<const SampleRecord*>(group), rng);
  const std::size_t n = group.size();
  const std::size_t n_val = floor_share(ratios.val, n);
  const std::size_t n_test = floor_share(ratios.test, n);
  const std::size_t n_train = n - n_val - n_test;
  for (std::size_t i = 0; i < n; ++i) {
    const Split s = i < n_train ? Split::kTrain : (i < n_train + n_val ? Split::kVal : Split::kTest);
    out.by_id[group[i]->id] = s;
  }
}

}  // namespace

SplitAssignment split_dataset(std::span<const SampleRecord> records, SplitRatios ratios,
                              std::uint64_t seed, bool stratified) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9 || ratios.train < 0 || ratios.val < 0 || ratios.test < 0) {
    throw UsageError("split ratios must be non-negative and sum to 1");
  }
  if (records.size() < 3) {
    throw UsageError("split_dataset: need at least 3 records, got " +
                     std::to_string(records.size()));
  }
  SplitAssignment out;
  out.seed = seed;
  out.ratios = ratios;
  std::mt19937_64 rng(derive_seed(seed, 0x5917));
  if (!stratified) {
    std::vector<const SampleRecord*> all;
    for (const auto& r : records) all.push_back(&r);
    assign_group(all, ratios, rng, out);
    return out;
  }
  std::map<std::string, std::vector<const SampleRecord*>> by_label;
  for (const auto& r : records) by_label[r.hs6].push_back(&r);
  for (auto& [label, group] : by_label) assign_group(group, ratios, rng, out);
  return out;
}

const std::vector<LabeledSample>& Dataset::get(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kVal: return val;
    case Split::kTest: return test;
  }
  return train;
}

Dataset assemble_dataset(std::span<const SampleRecord> records,
                         std::span<const EmbeddingTable> tables, const LabelVocab& vocab,
                         const SplitAssignment& split) {
  Dataset out;
  for (const auto& rec : records) {
    const auto label = vocab.index_of(rec.hs6);
    if (!label) {
      throw ValidationError("record '" + rec.id + "' has label '" + rec.hs6 +
                            "' outside the vocabulary");
    }
    LabeledSample sample{rec.id, {}, *label};
    for (const auto& table : tables) {
      const Vec* v = table.find(rec.embedding_ref(table.modality()));
      if (v == nullptr) {
        throw JoinError("no embedding for " + rec.id + "/" +
                        std::string(modality_name(table.modality())));
      }
      sample.inputs.push_back({table.modality(), *v});
    }
    const auto it = split.by_id.find(rec.id);
    if (it == split.by_id.end()) {
      throw ValidationError("record '" + rec.id + "' has no split assignment");
    }
    switch (it->second) {
      case Split::kTrain: out.train.push_back(std::move(sample)); break;
      case Split::kVal: out.val.push_back(std::move(sample)); break;
      case Split::kTest: out.test.push_back(std::move(sample)); break;
    }
  }
  return out;
}

}  // namespace hsfuse
