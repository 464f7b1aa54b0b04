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
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hsfuse/encoding.hpp"
#include "hsfuse/fusion.hpp"
#include "hsfuse/sample.hpp"
#include "hsfuse/tensor.hpp"
#include "hsfuse/vocab.hpp"

namespace hsfuse {

/// What the concat method concatenates.
enum class ConcatInput { kProjected, kRaw };

struct ModelConfig {
  std::vector<EncoderSpec> modalities;  // order fixes fusion order
  std::size_t hidden = 512;
  FusionMethod fusion = FusionMethod::kMultConcat;
  std::size_t lmf_rank = 16;
  std::size_t lmf_out = 64;
  std::size_t num_classes = 16;
  std::uint64_t seed = 42;
  ConcatInput concat_input = ConcatInput::kProjected;

  /// Throws UsageError on an invalid combination.
  void validate() const;
  bool uses_projection() const noexcept;
  std::vector<std::size_t> input_dims() const;
  std::size_t fused_dim() const;
  /// Position of `m` in `modalities`, or npos.
  std::size_t slot_of(Modality m) const noexcept;

  /// Single-line `key=value ...` form used in checkpoints.
  std::string to_record() const;
  static ModelConfig from_record(std::string_view line);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ModelParams {
  std::vector<Projection> projections;  // one per modality when projecting
  LmfParams lmf;                        // factors empty unless lmf
  Mat classifier_weight;                // classes x fused_dim
  Vec classifier_bias;                  // classes

  /// Correctly shaped, all zeros.
  static ModelParams zeros(const ModelConfig& cfg);
};

/// A named view over one parameter tensor; biases are 1 x n.
template <typename T>
struct BasicTensorRef {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  std::span<T> data;
};
using TensorRef = BasicTensorRef<double>;
using ConstTensorRef = BasicTensorRef<const double>;

/// Every parameter tensor in a fixed canonical order.
std::vector<TensorRef> named_tensors(ModelParams& params, const ModelConfig& cfg);
std::vector<ConstTensorRef> named_tensors(const ModelParams& params,
                                          const ModelConfig& cfg);

/// Weights ~ U(-s, s), s = sqrt(1 / fan_in); biases zero. Deterministic in
/// cfg.seed.
ModelParams init_model(const ModelConfig& cfg);

struct ForwardCache {
  std::vector<ProjectionCache> projections;
  FusionCache fusion;
  Vec fused;
};

/// Puts `sample` into configuration order. Throws InputError naming the
/// first missing, duplicated or unexpected modality, DimensionError on a
/// wrong-length vector.
std::vector<Vec> order_inputs(const ModelConfig& cfg,
                              std::span<const ModalityVector> sample);

Vec forward(const ModelParams& params, const ModelConfig& cfg,
            std::span<const ModalityVector> sample, ForwardCache* cache = nullptr);

/// Accumulates parameter gradients into `grads` (shaped like `params`) and
/// returns the gradient for each input in configuration order.
std::vector<Vec> backward(const ModelParams& params, const ModelConfig& cfg,
                          const ForwardCache& cache, const Vec& dlogits,
                          ModelParams& grads);

struct Prediction {
  std::size_t class_index;
  std::string hs6;
  double prob;
};

/// Class indices by descending logit, ties to the lower index.
std::vector<std::size_t> rank_classes(const Vec& logits);

/// Top-k of the full softmax; k is clamped to the class count. Throws
/// NumericError on non-finite logits.
std::vector<Prediction> predict_topk(const ModelParams& params, const ModelConfig& cfg,
                                     std::span<const ModalityVector> sample,
                                     std::size_t k, const LabelVocab& vocab);

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::string_view kCheckpointMagic = "hsfuse-checkpoint";
inline constexpr std::string_view kCheckpointVersion = "v1";

struct TrainingMeta {
  std::size_t epochs_run = 0;
  double best_val_loss = std::numeric_limits<double>::quiet_NaN();
};

struct Checkpoint {
  ModelConfig config;
  LabelVocab vocab;
  ModelParams params;
  TrainingMeta meta;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws VersionError, CorruptionError or ParseError (with line number).
Checkpoint parse_checkpoint(std::string_view text);

/// Writes atomically (temp file + rename). Throws IoError.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Write `contents` to `path` via a temp file and rename; no partial file on
/// failure.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// 17 significant digits; strtod gives back the same double.
std::string format_double(double v);

}  // namespace hsfuse
