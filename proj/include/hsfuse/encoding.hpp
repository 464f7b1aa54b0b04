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

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "hsfuse/fusion.hpp"
#include "hsfuse/tensor.hpp"

namespace hsfuse {

class EmbeddingTable;
struct SampleRecord;

// Where a modality's vectors come from.
struct FileSource {
  std::string path;  // may be empty once a model is trained
  friend bool operator==(const FileSource&, const FileSource&) = default;
};
struct HashSource {
  std::uint64_t seed = 0;
  friend bool operator==(const HashSource&, const HashSource&) = default;
};
struct RemoteSource {
  std::string endpoint;  // e.g. http://localhost:9000
  friend bool operator==(const RemoteSource&, const RemoteSource&) = default;
};
using EncoderSource = std::variant<FileSource, HashSource, RemoteSource>;

enum class EncoderKind { kFile, kHash, kRemote };

struct EncoderSpec {
  Modality modality = Modality::kDescription;
  std::size_t dim = 0;
  EncoderSource source;

  EncoderKind kind() const noexcept {
    return static_cast<EncoderKind>(source.index());
  }
  /// True when the vector can be computed from the record's text.
  bool derives_from_text() const noexcept { return kind() != EncoderKind::kFile; }
  void validate() const;

  /// "D:768:hash:7", "I:2048:file:img.emb", "T:768:remote:http://host:9000".
  /// File paths and endpoints are %-escaped so they survive record parsing.
  std::string to_string() const;
  static EncoderSpec parse(std::string_view text);

  friend bool operator==(const EncoderSpec&, const EncoderSpec&) = default;
};

/// Signed feature hashing of a bag of tokens, L2-normalised unless all-zero.
Vec hash_encode(const std::vector<std::string>& tokens, std::size_t dim,
                std::uint64_t seed);

/// Splits cleaned text on spaces.
std::vector<std::string> tokenize(std::string_view cleaned);

/// hash_encode of each record's text field for `modality` (after
/// clean_text), keyed by the record's embedding id for that modality.
EmbeddingTable hash_encode_records(std::span<const SampleRecord> records, Modality modality,
                                   std::size_t dim, std::uint64_t seed);

struct RemoteItem {
  std::string id;
  std::string text;
};

struct RemoteOptions {
  std::size_t batch_size = 256;
  std::size_t max_in_flight = 4;
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  std::chrono::milliseconds timeout{30000};
};

/// Calls POST <endpoint>/embed in batches and joins the replies by id.
/// Throws TransportError after the retry budget, ContractError on a
/// dimension mismatch or a missing id.
EmbeddingTable fetch_remote_embeddings(const std::string& endpoint,
                                       Modality modality, std::size_t dim,
                                       const std::vector<RemoteItem>& items,
                                       const RemoteOptions& options = {});

}  // namespace hsfuse
