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

#include "hsfuse/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <thread>
#include <unordered_map>

#include "hsfuse/config.hpp"
#include "hsfuse/data.hpp"
#include "hsfuse/errors.hpp"
#include "hsfuse/hash.hpp"
#include "hsfuse/textprep.hpp"
#include "httplib.h"
#include "json.hpp"

namespace hsfuse {

using nlohmann::json;

namespace {

// Sources sit inside a whitespace- and comma-separated record, so those
// bytes (and '%' itself) are written as %XX.
std::string escape_source(std::string_view s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (c == '%' || c == ',' || c == '=' || c <= ' ' || c >= 0x7f) {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    } else {
      out += static_cast<char>(c);
    }
  }
  return out;
}

std::string unescape_source(std::string_view s) {
  auto nibble = [&](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw UsageError("encoder source '" + std::string(s) + "': bad %-escape");
  };
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '%') {
      out += s[i];
      continue;
    }
    if (i + 2 >= s.size()) {
      throw UsageError("encoder source '" + std::string(s) + "': truncated %-escape");
    }
    out += static_cast<char>(nibble(s[i + 1]) * 16 + nibble(s[i + 2]));
    i += 2;
  }
  return out;
}

}  // namespace

void EncoderSpec::validate() const {
  const std::string name(modality_name(modality));
  if (dim == 0) throw UsageError("encoder for " + name + ": dim must be positive");
  if (modality == Modality::kImage && kind() == EncoderKind::kHash) {
    throw UsageError("encoder for I: the hash encoder needs text, images have none");
  }
  if (const auto* remote = std::get_if<RemoteSource>(&source); remote && remote->endpoint.empty()) {
    throw UsageError("encoder for " + name + ": remote encoder needs an endpoint");
  }
}

std::string EncoderSpec::to_string() const {
  std::string out = std::string(modality_name(modality)) + ":" + std::to_string(dim) + ":";
  switch (kind()) {
    case EncoderKind::kFile: {
      const auto& path = std::get<FileSource>(source).path;
      return path.empty() ? out + "file" : out + "file:" + escape_source(path);
    }
    case EncoderKind::kHash: return out + "hash:" + std::to_string(std::get<HashSource>(source).seed);
    case EncoderKind::kRemote: return out + "remote:" + escape_source(std::get<RemoteSource>(source).endpoint);
  }
  return out;
}

EncoderSpec EncoderSpec::parse(std::string_view text) {
  // <modality>:<dim>:<kind>[:<source>]; the source may itself contain ':'.
  std::size_t pos = 0;
  auto next_field = [&](bool last) {
    if (pos > text.size()) throw UsageError("encoder spec '" + std::string(text) + "' is incomplete");
    const auto colon = last ? std::string_view::npos : text.find(':', pos);
    auto field = text.substr(pos, colon == std::string_view::npos ? std::string_view::npos : colon - pos);
    pos = colon == std::string_view::npos ? text.size() + 1 : colon + 1;
    return field;
  };
  EncoderSpec spec;
  spec.modality = parse_modality(next_field(false));
  spec.dim = parse_u64(next_field(false), "encoder dim");
  const auto kind = next_field(false);
  if (kind == "file") {
    spec.source = FileSource{};
    if (pos <= text.size()) spec.source = FileSource{unescape_source(next_field(true))};
  } else if (kind == "hash") {
    spec.source = HashSource{parse_u64(next_field(true), "hash seed")};
  } else if (kind == "remote") {
    spec.source = RemoteSource{unescape_source(next_field(true))};
  } else {
    throw UsageError("encoder spec '" + std::string(text) + "': unknown kind '" +
                     std::string(kind) + "' (expected file, hash or remote)");
  }
  spec.validate();
  return spec;
}

Vec hash_encode(const std::vector<std::string>& tokens, std::size_t dim, std::uint64_t seed) {
  if (dim < 1) throw UsageError("hash_encode: dim must be >= 1");
  Vec v(dim);
  for (const auto& token : tokens) {
    const std::uint64_t h = seeded_fnv1a64(seed, token);
    v[h % dim] += (h >> 63) ? -1.0 : 1.0;
  }
  const double norm = l2_norm(v);
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

std::vector<std::string> tokenize(std::string_view cleaned) {
  std::vector<std::string> out;
  for (auto t : split_ws(cleaned)) out.emplace_back(t);
  return out;
}

EmbeddingTable hash_encode_records(std::span<const SampleRecord> records, Modality modality,
                                   std::size_t dim, std::uint64_t seed) {
  EmbeddingTable table(modality, dim);
  for (const auto& rec : records) {
    table.insert(rec.embedding_ref(modality),
                 hash_encode(tokenize(clean_text(rec.text(modality))), dim, seed));
  }
  return table;
}

namespace {

struct BatchReply {
  std::vector<std::pair<std::string, Vec>> vectors;
};

BatchReply call_embed(const std::string& endpoint, Modality modality, std::size_t dim,
                      std::span<const RemoteItem> batch, const RemoteOptions& options) {
  json body;
  body["modality"] = std::string(modality_name(modality));
  body["items"] = json::array();
  for (const auto& item : batch) body["items"].push_back({{"id", item.id}, {"text", item.text}});
  const std::string payload = body.dump();

  httplib::Client client(endpoint);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  std::string last_error;
  auto backoff = options.initial_backoff;
  for (int attempt = 1; attempt <= options.attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    auto res = client.Post("/embed", payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw TransportError("embedding service " + endpoint + " returned HTTP " +
                           std::to_string(res->status));
    }
    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw ContractError(std::string("embedding service returned malformed JSON: ") + e.what());
    }
    if (!reply.contains("dim") || !reply["dim"].is_number_unsigned() ||
        !reply.contains("vectors") || !reply["vectors"].is_array()) {
      throw ContractError("embedding service reply lacks 'dim' or 'vectors'");
    }
    const auto reply_dim = reply["dim"].get<std::size_t>();
    if (reply_dim != dim) {
      throw ContractError("embedding service reports dim " + std::to_string(reply_dim) +
                          ", expected " + std::to_string(dim));
    }
    BatchReply out;
    for (const auto& v : reply["vectors"]) {
      if (!v.is_object() || !v.contains("id") || !v["id"].is_string() || !v.contains("values") ||
          !v["values"].is_array()) {
        throw ContractError("embedding service reply has a malformed vector entry");
      }
      const auto id = v["id"].get<std::string>();
      std::vector<double> values;
      for (const auto& x : v["values"]) {
        if (!x.is_number()) throw ContractError("vector for '" + id + "' holds a non-number");
        values.push_back(x.get<double>());
      }
      if (values.size() != dim) {
        throw ContractError("vector for '" + id + "' has " + std::to_string(values.size()) +
                            " values, expected " + std::to_string(dim));
      }
      out.vectors.emplace_back(id, Vec(std::move(values)));
    }
    return out;
  }
  throw TransportError("embedding service " + endpoint + " failed after " +
                       std::to_string(options.attempts) + " attempts: " + last_error);
}

}  // namespace

EmbeddingTable fetch_remote_embeddings(const std::string& endpoint, Modality modality,
                                       std::size_t dim, const std::vector<RemoteItem>& items,
                                       const RemoteOptions& options) {
  EmbeddingTable table(modality, dim);
  if (items.empty()) return table;
  if (options.batch_size < 1 || options.max_in_flight < 1 || options.attempts < 1) {
    throw UsageError("fetch_remote_embeddings: batch size, fan-out and attempts must be >= 1");
  }

  std::vector<std::span<const RemoteItem>> batches;
  for (std::size_t start = 0; start < items.size(); start += options.batch_size) {
    const std::size_t n = std::min(options.batch_size, items.size() - start);
    batches.emplace_back(items.data() + start, n);
  }

  std::unordered_map<std::string, Vec> received;
  for (std::size_t wave = 0; wave < batches.size(); wave += options.max_in_flight) {
    std::vector<std::future<BatchReply>> pending;
    const std::size_t end = std::min(batches.size(), wave + options.max_in_flight);
    for (std::size_t b = wave; b < end; ++b) {
      pending.push_back(std::async(std::launch::async, call_embed, std::cref(endpoint), modality,
                                   dim, batches[b], std::cref(options)));
    }
    for (auto& f : pending) {
      for (auto& [id, v] : f.get().vectors) {
        if (!received.emplace(id, std::move(v)).second) {
          throw ContractError("embedding service returned '" + id + "' twice");
        }
      }
    }
  }

  for (const auto& item : items) {
    auto it = received.find(item.id);
    if (it == received.end()) {
      throw ContractError("embedding service reply is missing id '" + item.id + "'");
    }
    try {
      table.insert(item.id, std::move(it->second));
    } catch (const FormatError& e) {
      throw ContractError(e.what());
    }
    received.erase(it);
  }
  if (!received.empty()) {
    throw ContractError("embedding service returned unrequested id '" + received.begin()->first + "'");
  }
  return table;
}

}  // namespace hsfuse
