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

#include "hsfuse/tensor.hpp"

namespace hsfuse {

/// Input channels of a declaration. C_cat is the product category; it is
/// kept distinct from the concatenation term of MultConcat.
enum class Modality { kImage, kTitle, kDescription, kCategory };

std::string_view modality_name(Modality m);
/// Accepts "I", "T", "D", "C_cat". Throws UsageError otherwise.
Modality parse_modality(std::string_view name);
/// Name of the free-text field a text modality is derived from
/// ("title", "description", "category"); empty for the image modality.
std::string_view modality_text_field(Modality m);

struct ModalityVector {
  Modality modality;
  Vec values;
  std::size_t dim() const noexcept { return values.dim(); }
};

enum class FusionMethod { kConcat, kMultConcat, kLmf };

std::string_view fusion_name(FusionMethod m);
FusionMethod parse_fusion(std::string_view name);

struct FusedVector {
  Vec values;
  FusionMethod method;
};

// ---------------------------------------------------------------------------
// Per-modality projection: out = relu(W x + b).

struct Projection {
  Mat weight;  // h x d_i
  Vec bias;    // h
};

struct ProjectionCache {
  Vec input;
  Vec pre_activation;
};

Vec project_modality(const Vec& input, const Projection& p,
                     ProjectionCache* cache = nullptr);
Vec project_modality(const ModalityVector& input, const Projection& p,
                     ProjectionCache* cache = nullptr);

/// Accumulates dL/dW and dL/db into `param_grads` and returns dL/dinput.
Vec project_backward(const Projection& p, const ProjectionCache& cache,
                     const Vec& upstream, Projection& param_grads);

// ---------------------------------------------------------------------------
// Fusion operators.

/// outs[0] || ... || outs[N-1]. Throws UsageError on an empty list.
FusedVector concat_fuse(std::span<const Vec> outs);

/// Elementwise product of equal-length vectors.
Vec hadamard_fuse(std::span<const Vec> outs);

/// concat_fuse(outs) || hadamard_fuse(outs); dim (N+1)*h.
FusedVector mult_concat_fuse(std::span<const Vec> outs);

/// Low-rank multimodal fusion factors. factors[m][i] is the rank-i slice for
/// modality m, shaped (d_m + 1) x out_dim; the last row multiplies the
/// constant 1 appended to the modality vector.
struct LmfParams {
  std::size_t rank = 0;
  std::size_t out_dim = 0;
  std::vector<std::vector<Mat>> factors;

  static LmfParams zeros(std::span<const std::size_t> input_dims,
                         std::size_t rank, std::size_t out_dim);

  std::size_t modality_count() const noexcept { return factors.size(); }
  /// Throws UsageError if rank < 1 and DimensionError on ragged factors.
  void validate() const;
};

/// sum_i prod_m (z~_m F_m^(i)), z~_m = [z_m, 1].
FusedVector lmf_fuse(std::span<const Vec> inputs, const LmfParams& p);
FusedVector lmf_fuse(std::span<const ModalityVector> inputs, const LmfParams& p);

/// Brute-force verifier for lmf_fuse: materialises the full weight tensor
/// and the outer product of the augmented inputs and contracts them.
/// Throws UsageError when prod(d_m + 1) exceeds kTensorOracleCap.
inline constexpr std::size_t kTensorOracleCap = 1'000'000;
Vec tensor_fusion_oracle(std::span<const Vec> inputs, const LmfParams& p);

// ---------------------------------------------------------------------------
// Forward/backward with a cache.

struct FusionCache {
  FusionMethod method = FusionMethod::kConcat;
  std::vector<Vec> inputs;
  // lmf only: slices[i][m] = z~_m F_m^(i)
  std::vector<std::vector<Vec>> slices;
};

/// Dispatches to the selected operator and records what backward needs.
/// `lmf` must be non-null for FusionMethod::kLmf.
FusedVector fuse(FusionMethod method, std::span<const Vec> inputs,
                 const LmfParams* lmf, FusionCache* cache);

struct FusionGrads {
  std::vector<Vec> inputs;
  LmfParams lmf;  // populated for lmf only
};

/// Analytic gradients of the fused output with respect to every input and
/// (for lmf) every factor. Throws UsageError if cache.method != method.
FusionGrads fusion_backward(FusionMethod method, const FusionCache& cache,
                            const Vec& upstream, const LmfParams* lmf);

/// Output dimension of `method` for the given input dims.
std::size_t fused_dim(FusionMethod method, std::span<const std::size_t> input_dims,
                      std::size_t lmf_out_dim);

}  // namespace hsfuse
