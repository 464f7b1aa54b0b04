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

#include "hsfuse/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "hsfuse/config.hpp"
#include "hsfuse/errors.hpp"
#include "hsfuse/random.hpp"

namespace hsfuse {

void ModelConfig::validate() const {
  if (modalities.empty()) throw UsageError("model config: no modalities");
  std::set<Modality> seen;
  for (const auto& spec : modalities) {
    spec.validate();
    if (!seen.insert(spec.modality).second) {
      throw UsageError("model config: modality " +
                       std::string(modality_name(spec.modality)) + " listed twice");
    }
  }
  if (num_classes < 2) throw UsageError("model config: need at least 2 classes");
  if (uses_projection() && hidden < 1) throw UsageError("model config: hidden must be >= 1");
  if (fusion == FusionMethod::kLmf) {
    if (lmf_rank < 1) throw UsageError("model config: lmf_rank must be >= 1");
    if (lmf_out < 1) throw UsageError("model config: lmf_out must be >= 1");
  }
}

bool ModelConfig::uses_projection() const noexcept {
  return fusion == FusionMethod::kMultConcat ||
         (fusion == FusionMethod::kConcat && concat_input == ConcatInput::kProjected);
}

std::vector<std::size_t> ModelConfig::input_dims() const {
  std::vector<std::size_t> dims;
  for (const auto& spec : modalities) dims.push_back(spec.dim);
  return dims;
}

std::size_t ModelConfig::fused_dim() const {
  if (uses_projection()) {
    std::vector<std::size_t> dims(modalities.size(), hidden);
    return hsfuse::fused_dim(fusion, dims, lmf_out);
  }
  return hsfuse::fused_dim(fusion, input_dims(), lmf_out);
}

std::size_t ModelConfig::slot_of(Modality m) const noexcept {
  for (std::size_t i = 0; i < modalities.size(); ++i) {
    if (modalities[i].modality == m) return i;
  }
  return static_cast<std::size_t>(-1);
}

std::string ModelConfig::to_record() const {
  std::ostringstream out;
  out << "modalities=";
  for (std::size_t i = 0; i < modalities.size(); ++i) {
    if (i) out << ',';
    out << modalities[i].to_string();
  }
  out << " hidden=" << hidden << " fusion=" << fusion_name(fusion)
      << " lmf_rank=" << lmf_rank << " lmf_out=" << lmf_out
      << " classes=" << num_classes << " seed=" << seed << " concat_input="
      << (concat_input == ConcatInput::kRaw ? "raw" : "projected");
  return out.str();
}

ModelConfig ModelConfig::from_record(std::string_view line) {
  ModelConfig cfg;
  bool have_modalities = false;
  for (const auto& [key, value] : parse_record(line)) {
    if (key == "modalities") {
      have_modalities = true;
      cfg.modalities.clear();
      for (const auto& item : split(value, ',')) {
        cfg.modalities.push_back(EncoderSpec::parse(item));
      }
    } else if (key == "hidden") {
      cfg.hidden = parse_u64(value, key);
    } else if (key == "fusion") {
      cfg.fusion = parse_fusion(value);
    } else if (key == "lmf_rank") {
      cfg.lmf_rank = parse_u64(value, key);
    } else if (key == "lmf_out") {
      cfg.lmf_out = parse_u64(value, key);
    } else if (key == "classes") {
      cfg.num_classes = parse_u64(value, key);
    } else if (key == "seed") {
      cfg.seed = parse_u64(value, key);
    } else if (key == "concat_input") {
      if (value == "raw") {
        cfg.concat_input = ConcatInput::kRaw;
      } else if (value == "projected") {
        cfg.concat_input = ConcatInput::kProjected;
      } else {
        throw UsageError("concat_input: expected raw or projected, got '" + value + "'");
      }
    } else {
      throw UsageError("unknown model config key '" + key + "'");
    }
  }
  if (!have_modalities) throw UsageError("model config: missing modalities");
  cfg.validate();
  return cfg;
}

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  if (cfg.uses_projection()) {
    for (const auto& spec : cfg.modalities) {
      p.projections.push_back({Mat(cfg.hidden, spec.dim), Vec(cfg.hidden)});
    }
  }
  if (cfg.fusion == FusionMethod::kLmf) {
    const auto dims = cfg.input_dims();
    p.lmf = LmfParams::zeros(dims, cfg.lmf_rank, cfg.lmf_out);
  }
  p.classifier_weight = Mat(cfg.num_classes, cfg.fused_dim());
  p.classifier_bias = Vec(cfg.num_classes);
  return p;
}

namespace {

template <typename Params, typename Ref>
std::vector<Ref> collect_tensors(Params& p, const ModelConfig& cfg) {
  std::vector<Ref> out;
  for (std::size_t i = 0; i < p.projections.size(); ++i) {
    const std::string base = "proj." + std::string(modality_name(cfg.modalities.at(i).modality));
    auto& proj = p.projections[i];
    out.push_back({base + ".weight", proj.weight.rows(), proj.weight.cols(), proj.weight.span()});
    out.push_back({base + ".bias", 1, proj.bias.dim(), proj.bias.span()});
  }
  for (std::size_t m = 0; m < p.lmf.factors.size(); ++m) {
    const std::string base = "lmf." + std::string(modality_name(cfg.modalities.at(m).modality));
    for (std::size_t i = 0; i < p.lmf.factors[m].size(); ++i) {
      auto& f = p.lmf.factors[m][i];
      out.push_back({base + ".factor." + std::to_string(i), f.rows(), f.cols(), f.span()});
    }
  }
  out.push_back({"classifier.weight", p.classifier_weight.rows(),
                 p.classifier_weight.cols(), p.classifier_weight.span()});
  out.push_back({"classifier.bias", 1, p.classifier_bias.dim(), p.classifier_bias.span()});
  return out;
}

bool is_bias(const std::string& name) {
  return name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0;
}

}  // namespace

std::vector<TensorRef> named_tensors(ModelParams& params, const ModelConfig& cfg) {
  return collect_tensors<ModelParams, TensorRef>(params, cfg);
}

std::vector<ConstTensorRef> named_tensors(const ModelParams& params,
                                          const ModelConfig& cfg) {
  return collect_tensors<const ModelParams, ConstTensorRef>(params, cfg);
}

ModelParams init_model(const ModelConfig& cfg) {
  ModelParams p = ModelParams::zeros(cfg);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0));
  for (auto& t : named_tensors(p, cfg)) {
    if (is_bias(t.name)) continue;  // zeros
    // Factors are (d_m + 1) x d_h and consume the augmented input as a row
    // vector, so their fan-in is the row count; W is out x in.
    const bool factor = t.name.rfind("lmf.", 0) == 0;
    const double fan_in = static_cast<double>(factor ? t.rows : t.cols);
    const double scale = std::sqrt(1.0 / fan_in);
    for (double& w : t.data) w = scale * (2.0 * uniform01(rng) - 1.0);
  }
  return p;
}

std::vector<Vec> order_inputs(const ModelConfig& cfg,
                              std::span<const ModalityVector> sample) {
  std::vector<Vec> ordered(cfg.modalities.size());
  std::vector<bool> filled(cfg.modalities.size(), false);
  for (const auto& mv : sample) {
    const std::size_t slot = cfg.slot_of(mv.modality);
    const std::string name(modality_name(mv.modality));
    if (slot >= cfg.modalities.size()) {
      throw InputError("unexpected modality " + name + " (not in model config)");
    }
    if (filled[slot]) throw InputError("modality " + name + " given twice");
    if (mv.dim() != cfg.modalities[slot].dim) {
      throw DimensionError("modality " + name + " has dim " + std::to_string(mv.dim()) +
                           ", model expects " + std::to_string(cfg.modalities[slot].dim));
    }
    ordered[slot] = mv.values;
    filled[slot] = true;
  }
  for (std::size_t i = 0; i < filled.size(); ++i) {
    if (!filled[i]) {
      throw InputError("missing modality " +
                       std::string(modality_name(cfg.modalities[i].modality)));
    }
  }
  return ordered;
}

Vec forward(const ModelParams& params, const ModelConfig& cfg,
            std::span<const ModalityVector> sample, ForwardCache* cache) {
  std::vector<Vec> inputs = order_inputs(cfg, sample);
  std::vector<Vec> fusion_inputs;
  if (cfg.uses_projection()) {
    if (cache != nullptr) cache->projections.assign(inputs.size(), {});
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      fusion_inputs.push_back(project_modality(
          inputs[i], params.projections.at(i),
          cache != nullptr ? &cache->projections[i] : nullptr));
    }
  } else {
    if (cache != nullptr) cache->projections.clear();
    fusion_inputs = std::move(inputs);
  }
  FusedVector fused = fuse(cfg.fusion, fusion_inputs, &params.lmf,
                           cache != nullptr ? &cache->fusion : nullptr);
  Vec logits = affine(fused.values, params.classifier_weight, params.classifier_bias);
  if (cache != nullptr) cache->fused = std::move(fused.values);
  return logits;
}

std::vector<Vec> backward(const ModelParams& params, const ModelConfig& cfg,
                          const ForwardCache& cache, const Vec& dlogits,
                          ModelParams& grads) {
  add_outer(grads.classifier_weight, dlogits, cache.fused);
  add_inplace(grads.classifier_bias, dlogits);
  const Vec dfused = affine_transpose(params.classifier_weight, dlogits);

  FusionGrads fg = fusion_backward(cfg.fusion, cache.fusion, dfused, &params.lmf);
  if (cfg.fusion == FusionMethod::kLmf) {
    for (std::size_t m = 0; m < fg.lmf.factors.size(); ++m) {
      for (std::size_t i = 0; i < fg.lmf.factors[m].size(); ++i) {
        add_inplace(grads.lmf.factors[m][i], fg.lmf.factors[m][i]);
      }
    }
  }
  if (!cfg.uses_projection()) return std::move(fg.inputs);

  std::vector<Vec> input_grads;
  for (std::size_t i = 0; i < fg.inputs.size(); ++i) {
    input_grads.push_back(project_backward(params.projections[i], cache.projections.at(i),
                                           fg.inputs[i], grads.projections[i]));
  }
  return input_grads;
}

std::vector<std::size_t> rank_classes(const Vec& logits) {
  std::vector<std::size_t> order(logits.dim());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return logits[a] > logits[b];
  });
  return order;
}

std::vector<Prediction> predict_topk(const ModelParams& params, const ModelConfig& cfg,
                                     std::span<const ModalityVector> sample,
                                     std::size_t k, const LabelVocab& vocab) {
  if (k < 1) throw UsageError("predict_topk: k must be >= 1");
  if (vocab.size() != cfg.num_classes) {
    throw UsageError("predict_topk: vocabulary has " + std::to_string(vocab.size()) +
                     " codes, model has " + std::to_string(cfg.num_classes) + " classes");
  }
  const Vec logits = forward(params, cfg, sample);
  if (!logits.all_finite()) throw NumericError("predict_topk: non-finite logits");
  const Vec probs = softmax(logits);
  const auto order = rank_classes(logits);
  const std::size_t n = std::min(k, order.size());
  std::vector<Prediction> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({order[i], vocab.code(order[i]), probs[order[i]]});
  }
  return out;
}

}  // namespace hsfuse
