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

#include "hsfuse/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "hsfuse/config.hpp"
#include "hsfuse/errors.hpp"
#include "hsfuse/random.hpp"

namespace hsfuse {

LossAndGrad cross_entropy(const Vec& logits, std::size_t label) {
  if (label >= logits.dim()) {
    throw UsageError("cross_entropy: label " + std::to_string(label) +
                     " out of range for " + std::to_string(logits.dim()) + " classes");
  }
  const double lse = log_sum_exp(logits);
  Vec grad = softmax(logits);
  grad[label] -= 1.0;
  return {lse - logits[label], std::move(grad)};
}

void adam_step(std::span<const TensorRef> params, std::span<const ConstTensorRef> grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameter tensors, " +
                         std::to_string(grads.size()) + " gradients, " +
                         std::to_string(state.first_moment.size()) + " moment buffers");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].data.size() != grads[t].data.size() ||
        params[t].data.size() != state.first_moment[t].size()) {
      throw DimensionError("adam_step: shape mismatch for '" + params[t].name + "'");
    }
    for (double g : grads[t].data) {
      if (!std::isfinite(g)) {
        throw NumericError("adam_step: non-finite gradient in '" + grads[t].name + "'");
      }
    }
  }

  const AdamHyper& h = state.hyper;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(h.beta1, t);
  const double correction2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto theta = params[k].data;
    auto g = grads[k].data;
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      theta[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw UsageError("train config: lr must be > 0");
  if (max_epochs < 1) throw UsageError("train config: epochs must be >= 1");
  if (patience < 1) throw UsageError("train config: patience must be >= 1");
  if (batch_size < 1) throw UsageError("train config: batch_size must be >= 1");
  if (!(clip_norm >= 0.0)) throw UsageError("train config: clip_norm must be >= 0");
}

std::string_view stop_reason_name(StopReason r) {
  return r == StopReason::kEarlyStop ? "early_stop" : "max_epochs";
}

double TrainHistory::best_val_loss() const {
  if (best_epoch == 0 || best_epoch > epochs.size()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return epochs[best_epoch - 1].val_loss;
}

SplitLoss evaluate_loss(const ModelParams& params, const ModelConfig& cfg,
                        std::span<const LabeledSample> samples) {
  if (samples.empty()) throw UsageError("evaluate_loss: empty split");
  double total = 0.0;
  std::size_t hits = 0;
  for (const auto& s : samples) {
    const Vec logits = forward(params, cfg, s.inputs);
    total += cross_entropy(logits, s.label).loss;
    if (rank_classes(logits).front() == s.label) ++hits;
  }
  const double n = static_cast<double>(samples.size());
  return {total / n, static_cast<double>(hits) / n};
}

namespace {

void check_split(std::span<const LabeledSample> split, const ModelConfig& cfg,
                 const char* name) {
  if (split.empty()) throw UsageError(std::string("train: ") + name + " split is empty");
  for (const auto& s : split) {
    if (s.label >= cfg.num_classes) {
      throw UsageError(std::string("train: ") + name + " sample '" + s.id + "' has label " +
                       std::to_string(s.label) + " outside " +
                       std::to_string(cfg.num_classes) + " classes");
    }
  }
}

void zero(ModelParams& p, const ModelConfig& cfg) {
  for (auto& t : named_tensors(p, cfg)) std::fill(t.data.begin(), t.data.end(), 0.0);
}

void scale_and_clip(std::vector<TensorRef>& grads, double scale, double clip_norm) {
  double sq = 0.0;
  for (auto& t : grads) {
    for (double& g : t.data) {
      g *= scale;
      sq += g * g;
    }
  }
  if (clip_norm > 0.0) {
    const double norm = std::sqrt(sq);
    if (norm > clip_norm) {
      const double f = clip_norm / norm;
      for (auto& t : grads) {
        for (double& g : t.data) g *= f;
      }
    }
  }
}

}  // namespace

TrainResult train(const ModelConfig& cfg, const TrainConfig& tcfg,
                  std::span<const LabeledSample> train_set,
                  std::span<const LabeledSample> val_set, const EpochCallback& on_epoch) {
  cfg.validate();
  tcfg.validate();
  check_split(train_set, cfg, "train");
  check_split(val_set, cfg, "validation");

  ModelParams params = init_model(cfg);
  ModelParams grads = ModelParams::zeros(cfg);
  auto param_refs = named_tensors(params, cfg);
  auto grad_refs = named_tensors(grads, cfg);
  std::vector<ConstTensorRef> grad_view;
  for (const auto& g : grad_refs) grad_view.push_back({g.name, g.rows, g.cols, g.data});
  AdamState adam = AdamState::for_tensors<TensorRef>(param_refs, {tcfg.lr, 0.9, 0.999, 1e-8});

  TrainResult result{params, {}};
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(tcfg.seed, epoch));
    shuffle(std::span<std::size_t>(order), rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + tcfg.batch_size);
      zero(grads, cfg);
      ForwardCache cache;
      for (std::size_t b = start; b < end; ++b) {
        const auto& sample = train_set[order[b]];
        const Vec logits = forward(params, cfg, sample.inputs, &cache);
        auto [loss, dlogits] = cross_entropy(logits, sample.label);
        if (!std::isfinite(loss)) {
          throw NumericError("training diverged: non-finite loss in epoch " +
                             std::to_string(epoch));
        }
        epoch_loss += loss;
        backward(params, cfg, cache, dlogits, grads);
      }
      scale_and_clip(grad_refs, 1.0 / static_cast<double>(end - start), tcfg.clip_norm);
      try {
        adam_step(param_refs, grad_view, adam);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " in epoch " + std::to_string(epoch));
      }
    }

    const SplitLoss val = evaluate_loss(params, cfg, val_set);
    if (!std::isfinite(val.mean_loss)) {
      throw NumericError("training diverged: non-finite validation loss in epoch " +
                         std::to_string(epoch));
    }
    const EpochRecord record{epoch, epoch_loss / static_cast<double>(order.size()),
                             val.mean_loss, val.top1};
    result.history.epochs.push_back(record);
    if (on_epoch) on_epoch(record);

    if (val.mean_loss < best_loss) {
      best_loss = val.mean_loss;
      result.history.best_epoch = epoch;
      result.params = params;
      since_best = 0;
    } else if (++since_best >= tcfg.patience) {
      result.history.stop = StopReason::kEarlyStop;
      return result;
    }
  }
  result.history.stop = StopReason::kMaxEpochs;
  return result;
}

RunConfig parse_run_config(std::string_view text, RunConfig base) {
  RunConfig cfg = std::move(base);
  for (const auto& [key, value] : parse_key_value_text(text)) {
    if (key == "lr") {
      cfg.train.lr = parse_double(value, key);
    } else if (key == "epochs") {
      cfg.train.max_epochs = parse_u64(value, key);
    } else if (key == "patience") {
      cfg.train.patience = parse_u64(value, key);
    } else if (key == "batch_size") {
      cfg.train.batch_size = parse_u64(value, key);
    } else if (key == "seed") {
      cfg.train.seed = parse_u64(value, key);
    } else if (key == "clip_norm") {
      cfg.train.clip_norm = parse_double(value, key);
    } else if (key == "fusion") {
      cfg.fusion = parse_fusion(value);
    } else if (key == "hidden") {
      cfg.hidden = parse_u64(value, key);
    } else if (key == "lmf_rank") {
      cfg.lmf_rank = parse_u64(value, key);
    } else if (key == "lmf_out") {
      cfg.lmf_out = parse_u64(value, key);
    } else if (key == "concat_input") {
      if (value == "raw") {
        cfg.concat_input = ConcatInput::kRaw;
      } else if (value == "projected") {
        cfg.concat_input = ConcatInput::kProjected;
      } else {
        throw UsageError("concat_input: expected raw or projected, got '" + value + "'");
      }
    } else if (key == "stratified_split") {
      cfg.stratified_split = parse_bool(value, key);
    } else if (key == "hash_dim") {
      cfg.hash_dim = parse_u64(value, key);
    } else if (key == "hash_seed") {
      cfg.hash_seed = parse_u64(value, key);
    } else {
      throw UsageError("unknown config key '" + key + "'");
    }
  }
  cfg.train.validate();
  return cfg;
}

}  // namespace hsfuse
