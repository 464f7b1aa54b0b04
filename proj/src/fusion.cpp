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

#include "hsfuse/fusion.hpp"

#include <sstream>

#include "hsfuse/errors.hpp"

namespace hsfuse {

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::kImage: return "I";
    case Modality::kTitle: return "T";
    case Modality::kDescription: return "D";
    case Modality::kCategory: return "C_cat";
  }
  return "?";
}

Modality parse_modality(std::string_view name) {
  if (name == "I") return Modality::kImage;
  if (name == "T") return Modality::kTitle;
  if (name == "D") return Modality::kDescription;
  if (name == "C_cat") return Modality::kCategory;
  throw UsageError("unknown modality '" + std::string(name) +
                   "' (expected I, T, D or C_cat)");
}

std::string_view modality_text_field(Modality m) {
  switch (m) {
    case Modality::kTitle: return "title";
    case Modality::kDescription: return "description";
    case Modality::kCategory: return "category";
    case Modality::kImage: return "";
  }
  return "";
}

std::string_view fusion_name(FusionMethod m) {
  switch (m) {
    case FusionMethod::kConcat: return "concat";
    case FusionMethod::kMultConcat: return "multconcat";
    case FusionMethod::kLmf: return "lmf";
  }
  return "?";
}

FusionMethod parse_fusion(std::string_view name) {
  if (name == "concat") return FusionMethod::kConcat;
  if (name == "multconcat") return FusionMethod::kMultConcat;
  if (name == "lmf") return FusionMethod::kLmf;
  throw UsageError("unknown fusion method '" + std::string(name) +
                   "' (expected concat, multconcat or lmf)");
}

Vec project_modality(const Vec& input, const Projection& p, ProjectionCache* cache) {
  Vec pre = affine(input, p.weight, p.bias);
  Vec out = relu(pre);
  if (cache != nullptr) {
    cache->input = input;
    cache->pre_activation = std::move(pre);
  }
  return out;
}

Vec project_modality(const ModalityVector& input, const Projection& p,
                     ProjectionCache* cache) {
  return project_modality(input.values, p, cache);
}

Vec project_backward(const Projection& p, const ProjectionCache& cache,
                     const Vec& upstream, Projection& param_grads) {
  if (upstream.dim() != cache.pre_activation.dim()) {
    throw DimensionError("projection backward: upstream dim " +
                         std::to_string(upstream.dim()) + ", output dim " +
                         std::to_string(cache.pre_activation.dim()));
  }
  Vec g(upstream.dim());
  for (std::size_t j = 0; j < g.dim(); ++j) {
    g[j] = cache.pre_activation[j] > 0.0 ? upstream[j] : 0.0;
  }
  add_outer(param_grads.weight, g, cache.input);
  add_inplace(param_grads.bias, g);
  return affine_transpose(p.weight, g);
}

namespace {

std::size_t common_dim(std::span<const Vec> outs, const char* op) {
  if (outs.empty()) throw UsageError(std::string(op) + ": no inputs");
  const std::size_t h = outs.front().dim();
  for (std::size_t i = 1; i < outs.size(); ++i) {
    if (outs[i].dim() != h) {
      std::ostringstream msg;
      msg << op << ": input 0 has dim " << h << ", input " << i << " has dim "
          << outs[i].dim();
      throw DimensionError(msg.str());
    }
  }
  return h;
}

// Product of outs[*][j] skipping index `skip` (skip == npos keeps all).
Vec hadamard_except(std::span<const Vec> outs, std::size_t h, std::size_t skip) {
  Vec z(h, 1.0);
  for (std::size_t i = 0; i < outs.size(); ++i) {
    if (i == skip) continue;
    for (std::size_t j = 0; j < h; ++j) z[j] *= outs[i][j];
  }
  return z;
}

Vec augmented_times(const Vec& z, const Mat& factor) {
  // [z, 1] * F, F is (d + 1) x d_h
  Vec out(factor.cols());
  for (std::size_t k = 0; k <= z.dim(); ++k) {
    const double zk = k < z.dim() ? z[k] : 1.0;
    if (zk == 0.0) continue;
    auto row = factor.row(k);
    for (std::size_t j = 0; j < out.dim(); ++j) out[j] += zk * row[j];
  }
  return out;
}

void check_lmf_inputs(std::span<const Vec> inputs, const LmfParams& p) {
  p.validate();
  if (inputs.size() != p.modality_count()) {
    throw DimensionError("lmf: " + std::to_string(inputs.size()) +
                         " inputs for " + std::to_string(p.modality_count()) +
                         " factor stacks");
  }
  for (std::size_t m = 0; m < inputs.size(); ++m) {
    const std::size_t rows = p.factors[m].front().rows();
    if (inputs[m].dim() + 1 != rows) {
      std::ostringstream msg;
      msg << "lmf: modality " << m << " has dim " << inputs[m].dim()
          << " but its factors are " << p.factors[m].front().shape_string();
      throw DimensionError(msg.str());
    }
  }
}

}  // namespace

FusedVector concat_fuse(std::span<const Vec> outs) {
  if (outs.empty()) throw UsageError("concat_fuse: no inputs");
  std::vector<double> values;
  for (const auto& o : outs) values.insert(values.end(), o.begin(), o.end());
  return {Vec(std::move(values)), FusionMethod::kConcat};
}

Vec hadamard_fuse(std::span<const Vec> outs) {
  const std::size_t h = common_dim(outs, "hadamard_fuse");
  return hadamard_except(outs, h, outs.size());
}

FusedVector mult_concat_fuse(std::span<const Vec> outs) {
  const std::size_t h = common_dim(outs, "mult_concat_fuse");
  std::vector<double> values;
  values.reserve((outs.size() + 1) * h);
  for (const auto& o : outs) values.insert(values.end(), o.begin(), o.end());
  const Vec z = hadamard_except(outs, h, outs.size());
  values.insert(values.end(), z.begin(), z.end());
  return {Vec(std::move(values)), FusionMethod::kMultConcat};
}

LmfParams LmfParams::zeros(std::span<const std::size_t> input_dims,
                           std::size_t rank, std::size_t out_dim) {
  LmfParams p;
  p.rank = rank;
  p.out_dim = out_dim;
  for (std::size_t d : input_dims) {
    p.factors.emplace_back(rank, Mat(d + 1, out_dim));
  }
  return p;
}

void LmfParams::validate() const {
  if (rank < 1) throw UsageError("lmf: rank must be at least 1");
  if (out_dim < 1) throw UsageError("lmf: output dim must be at least 1");
  if (factors.empty()) throw UsageError("lmf: no modalities");
  for (std::size_t m = 0; m < factors.size(); ++m) {
    if (factors[m].size() != rank) {
      throw DimensionError("lmf: modality " + std::to_string(m) + " has " +
                           std::to_string(factors[m].size()) +
                           " rank slices, expected " + std::to_string(rank));
    }
    const std::size_t rows = factors[m].front().rows();
    for (const auto& f : factors[m]) {
      if (f.rows() != rows || f.cols() != out_dim || rows < 1) {
        throw DimensionError("lmf: modality " + std::to_string(m) +
                             " has factor " + f.shape_string() +
                             ", expected " + std::to_string(rows) + "x" +
                             std::to_string(out_dim));
      }
    }
  }
}

namespace {

FusedVector lmf_forward(std::span<const Vec> inputs, const LmfParams& p,
                        FusionCache* cache) {
  check_lmf_inputs(inputs, p);
  Vec out(p.out_dim);
  if (cache != nullptr) cache->slices.assign(p.rank, {});
  for (std::size_t i = 0; i < p.rank; ++i) {
    Vec prod(p.out_dim, 1.0);
    for (std::size_t m = 0; m < inputs.size(); ++m) {
      Vec slice = augmented_times(inputs[m], p.factors[m][i]);
      for (std::size_t j = 0; j < p.out_dim; ++j) prod[j] *= slice[j];
      if (cache != nullptr) cache->slices[i].push_back(std::move(slice));
    }
    add_inplace(out, prod);
  }
  return {std::move(out), FusionMethod::kLmf};
}

}  // namespace

FusedVector lmf_fuse(std::span<const Vec> inputs, const LmfParams& p) {
  return lmf_forward(inputs, p, nullptr);
}

FusedVector lmf_fuse(std::span<const ModalityVector> inputs, const LmfParams& p) {
  std::vector<Vec> raw;
  raw.reserve(inputs.size());
  for (const auto& mv : inputs) raw.push_back(mv.values);
  return lmf_fuse(raw, p);
}

Vec tensor_fusion_oracle(std::span<const Vec> inputs, const LmfParams& p) {
  check_lmf_inputs(inputs, p);
  std::size_t total = 1;
  for (const auto& z : inputs) {
    total *= z.dim() + 1;
    if (total > kTensorOracleCap) {
      throw UsageError("tensor_fusion_oracle: tensor exceeds " +
                       std::to_string(kTensorOracleCap) + " entries");
    }
  }
  const std::size_t n = inputs.size();

  // Full outer product of the augmented inputs, first modality most
  // significant in the flat index.
  std::vector<double> outer(total);
  std::vector<std::size_t> digit(n, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    double v = 1.0;
    for (std::size_t m = 0; m < n; ++m) {
      const auto& z = inputs[m];
      v *= digit[m] < z.dim() ? z[digit[m]] : 1.0;
    }
    outer[flat] = v;
    for (std::size_t m = n; m-- > 0;) {
      if (++digit[m] <= inputs[m].dim()) break;
      digit[m] = 0;
    }
  }

  Vec out(p.out_dim);
  std::vector<double> weight(total);
  for (std::size_t j = 0; j < p.out_dim; ++j) {
    // W[:, j] = sum_i outer_m F_m^(i)[:, j]
    std::fill(weight.begin(), weight.end(), 0.0);
    for (std::size_t i = 0; i < p.rank; ++i) {
      std::fill(digit.begin(), digit.end(), 0);
      for (std::size_t flat = 0; flat < total; ++flat) {
        double v = 1.0;
        for (std::size_t m = 0; m < n; ++m) v *= p.factors[m][i](digit[m], j);
        weight[flat] += v;
        for (std::size_t m = n; m-- > 0;) {
          if (++digit[m] <= inputs[m].dim()) break;
          digit[m] = 0;
        }
      }
    }
    double acc = 0.0;
    for (std::size_t flat = 0; flat < total; ++flat) acc += weight[flat] * outer[flat];
    out[j] = acc;
  }
  return out;
}

FusedVector fuse(FusionMethod method, std::span<const Vec> inputs,
                 const LmfParams* lmf, FusionCache* cache) {
  if (cache != nullptr) {
    cache->method = method;
    cache->inputs.assign(inputs.begin(), inputs.end());
    cache->slices.clear();
  }
  switch (method) {
    case FusionMethod::kConcat: return concat_fuse(inputs);
    case FusionMethod::kMultConcat: return mult_concat_fuse(inputs);
    case FusionMethod::kLmf:
      if (lmf == nullptr) throw UsageError("fuse: lmf requires parameters");
      return lmf_forward(inputs, *lmf, cache);
  }
  throw UsageError("fuse: unknown method");
}

FusionGrads fusion_backward(FusionMethod method, const FusionCache& cache,
                            const Vec& upstream, const LmfParams* lmf) {
  if (cache.method != method) {
    throw UsageError("fusion_backward: cache was recorded for " +
                     std::string(fusion_name(cache.method)) + ", not " +
                     std::string(fusion_name(method)));
  }
  const auto& inputs = cache.inputs;
  FusionGrads grads;

  switch (method) {
    case FusionMethod::kConcat: {
      std::size_t total = 0;
      for (const auto& x : inputs) total += x.dim();
      if (upstream.dim() != total) {
        throw DimensionError("concat backward: upstream dim " +
                             std::to_string(upstream.dim()) + ", expected " +
                             std::to_string(total));
      }
      std::size_t offset = 0;
      for (const auto& x : inputs) {
        Vec g(x.dim());
        for (std::size_t j = 0; j < x.dim(); ++j) g[j] = upstream[offset + j];
        offset += x.dim();
        grads.inputs.push_back(std::move(g));
      }
      return grads;
    }
    case FusionMethod::kMultConcat: {
      const std::size_t h = common_dim(inputs, "multconcat backward");
      const std::size_t n = inputs.size();
      if (upstream.dim() != (n + 1) * h) {
        throw DimensionError("multconcat backward: upstream dim " +
                             std::to_string(upstream.dim()) + ", expected " +
                             std::to_string((n + 1) * h));
      }
      for (std::size_t i = 0; i < n; ++i) {
        // d/d out_i of the Z block is upstream_Z * prod_{k != i} out_k
        const Vec others = hadamard_except(inputs, h, i);
        Vec g(h);
        for (std::size_t j = 0; j < h; ++j) {
          g[j] = upstream[i * h + j] + upstream[n * h + j] * others[j];
        }
        grads.inputs.push_back(std::move(g));
      }
      return grads;
    }
    case FusionMethod::kLmf: {
      if (lmf == nullptr) throw UsageError("fusion_backward: lmf requires parameters");
      const LmfParams& p = *lmf;
      check_lmf_inputs(inputs, p);
      if (cache.slices.size() != p.rank) {
        throw UsageError("fusion_backward: lmf cache does not match rank");
      }
      if (upstream.dim() != p.out_dim) {
        throw DimensionError("lmf backward: upstream dim " +
                             std::to_string(upstream.dim()) + ", expected " +
                             std::to_string(p.out_dim));
      }
      std::vector<std::size_t> dims;
      for (const auto& x : inputs) dims.push_back(x.dim());
      grads.lmf = LmfParams::zeros(dims, p.rank, p.out_dim);
      for (const auto& x : inputs) grads.inputs.emplace_back(x.dim());

      for (std::size_t i = 0; i < p.rank; ++i) {
        const auto& slices = cache.slices[i];
        for (std::size_t m = 0; m < inputs.size(); ++m) {
          Vec g = hadamard_except(slices, p.out_dim, m);
          for (std::size_t j = 0; j < p.out_dim; ++j) g[j] *= upstream[j];
          // slice = z~ F  =>  dF += z~ g^T,  dz~ = F g
          Mat& dfactor = grads.lmf.factors[m][i];
          const Mat& factor = p.factors[m][i];
          const Vec& z = inputs[m];
          for (std::size_t k = 0; k <= z.dim(); ++k) {
            const double zk = k < z.dim() ? z[k] : 1.0;
            auto drow = dfactor.row(k);
            auto frow = factor.row(k);
            double dz = 0.0;
            for (std::size_t j = 0; j < p.out_dim; ++j) {
              drow[j] += zk * g[j];
              dz += frow[j] * g[j];
            }
            if (k < z.dim()) grads.inputs[m][k] += dz;
          }
        }
      }
      return grads;
    }
  }
  throw UsageError("fusion_backward: unknown method");
}

std::size_t fused_dim(FusionMethod method, std::span<const std::size_t> input_dims,
                      std::size_t lmf_out_dim) {
  switch (method) {
    case FusionMethod::kConcat: {
      std::size_t total = 0;
      for (std::size_t d : input_dims) total += d;
      return total;
    }
    case FusionMethod::kMultConcat:
      return input_dims.empty() ? 0 : (input_dims.size() + 1) * input_dims.front();
    case FusionMethod::kLmf: return lmf_out_dim;
  }
  return 0;
}

}  // namespace hsfuse
