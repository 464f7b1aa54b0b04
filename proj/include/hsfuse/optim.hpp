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
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hsfuse/model.hpp"
#include "hsfuse/tensor.hpp"

namespace hsfuse {

struct LossAndGrad {
  double loss;
  Vec dlogits;
};

/// -log softmax(logits)[label] via log-sum-exp; dlogits = softmax - onehot.
LossAndGrad cross_entropy(const Vec& logits, std::size_t label);

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  /// Zeroed moments mirroring `shapes`.
  template <typename Ref>
  static AdamState for_tensors(std::span<const Ref> shapes, AdamHyper hyper) {
    AdamState s;
    s.hyper = hyper;
    for (const auto& t : shapes) {
      s.first_moment.emplace_back(t.data.size(), 0.0);
      s.second_moment.emplace_back(t.data.size(), 0.0);
    }
    return s;
  }
};

/// One bias-corrected Adam update. All gradients are checked before any
/// parameter moves; a non-finite entry throws NumericError naming the tensor.
void adam_step(std::span<const TensorRef> params, std::span<const ConstTensorRef> grads,
               AdamState& state);

struct TrainConfig {
  double lr = 1e-4;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
  double clip_norm = 0.0;  // 0 disables global-norm clipping

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch;  // 1-based
  double train_loss;
  double val_loss;
  double val_top1;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

enum class StopReason { kEarlyStop, kMaxEpochs };
std::string_view stop_reason_name(StopReason r);

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; minimal val loss
  StopReason stop = StopReason::kMaxEpochs;

  double best_val_loss() const;
  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct TrainResult {
  ModelParams params;  // from the best epoch
  TrainHistory history;
};

struct SplitLoss {
  double mean_loss;
  double top1;
};

/// Mean cross-entropy and top-1 accuracy over `samples` (non-empty).
SplitLoss evaluate_loss(const ModelParams& params, const ModelConfig& cfg,
                        std::span<const LabeledSample> samples);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam with early stopping on validation loss. Returns the
/// parameters of the best epoch. Throws UsageError on empty splits or
/// out-of-range labels, NumericError (with the epoch) on divergence.
TrainResult train(const ModelConfig& cfg, const TrainConfig& tcfg,
                  std::span<const LabeledSample> train_set,
                  std::span<const LabeledSample> val_set,
                  const EpochCallback& on_epoch = {});

/// Everything a training config file may set.
struct RunConfig {
  TrainConfig train;
  FusionMethod fusion = FusionMethod::kMultConcat;
  std::size_t hidden = 512;
  std::size_t lmf_rank = 16;
  std::size_t lmf_out = 64;
  ConcatInput concat_input = ConcatInput::kProjected;
  bool stratified_split = false;
  std::size_t hash_dim = 768;
  std::uint64_t hash_seed = 0;
};

/// Applies flat key=value text on top of `base`. Unknown keys and bad
/// values throw UsageError naming the key.
RunConfig parse_run_config(std::string_view text, RunConfig base = {});

}  // namespace hsfuse
