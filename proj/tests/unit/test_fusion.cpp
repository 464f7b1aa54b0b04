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

#include <cmath>

#include "doctest.h"
#include "hsfuse/errors.hpp"
#include "hsfuse/fusion.hpp"
#include "test_util.hpp"

using namespace hsfuse;

namespace {

LmfParams random_lmf(std::mt19937_64& rng, const std::vector<std::size_t>& dims, std::size_t rank,
                     std::size_t out) {
  LmfParams p = LmfParams::zeros(dims, rank, out);
  for (auto& per_modality : p.factors) {
    for (auto& f : per_modality) f = test::random_mat(rng, f.rows(), f.cols());
  }
  return p;
}

// Independent reference: builds z~_m explicitly and multiplies row vectors.
Vec lmf_reference(const std::vector<Vec>& inputs, const LmfParams& p) {
  Vec h(p.out_dim, 0.0);
  for (std::size_t i = 0; i < p.rank; ++i) {
    Vec prod(p.out_dim, 1.0);
    for (std::size_t m = 0; m < inputs.size(); ++m) {
      const Mat& f = p.factors[m][i];
      for (std::size_t c = 0; c < p.out_dim; ++c) {
        double s = f(inputs[m].dim(), c);
        for (std::size_t r = 0; r < inputs[m].dim(); ++r) s += inputs[m][r] * f(r, c);
        prod[c] *= s;
      }
    }
    for (std::size_t c = 0; c < p.out_dim; ++c) h[c] += prod[c];
  }
  return h;
}

}  // namespace

TEST_CASE("modality and fusion names round-trip") {
  for (auto m : {Modality::kImage, Modality::kTitle, Modality::kDescription, Modality::kCategory}) {
    CHECK(parse_modality(modality_name(m)) == m);
  }
  CHECK(modality_name(Modality::kCategory) == "C_cat");
  CHECK_THROWS_AS(parse_modality("C"), UsageError);
  for (auto f : {FusionMethod::kConcat, FusionMethod::kMultConcat, FusionMethod::kLmf}) {
    CHECK(parse_fusion(fusion_name(f)) == f);
  }
  CHECK_THROWS_AS(parse_fusion("attention"), UsageError);
}

TEST_CASE("projection applies relu after the affine map") {
  Projection p{Mat{{1, -1}, {2, 0}}, Vec{0, -5}};
  CHECK(project_modality(Vec{3, 1}, p) == Vec{2, 1});
  CHECK(project_modality(Vec{1, 3}, p) == Vec{0, 0});
}

TEST_CASE("concat_fuse joins in order and rejects an empty list") {
  const std::vector<Vec> outs{Vec{1, 2}, Vec{3}, Vec{4, 5, 6}};
  CHECK(concat_fuse(outs).values == Vec{1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(concat_fuse(std::span<const Vec>{}), UsageError);
}

TEST_CASE("mult_concat_fuse appends the elementwise product") {
  const std::vector<Vec> outs{Vec{1, 2}, Vec{3, 4}};
  const auto f = mult_concat_fuse(outs);
  CHECK(f.values == Vec{1, 2, 3, 4, 3, 8});
  CHECK(f.method == FusionMethod::kMultConcat);
  CHECK_THROWS_AS(mult_concat_fuse(std::vector<Vec>{Vec{1}, Vec{1, 2}}), DimensionError);
}

TEST_CASE("mult_concat_fuse with one input squares nothing") {
  const std::vector<Vec> outs{Vec{0.5, -2}};
  CHECK(mult_concat_fuse(outs).values == Vec{0.5, -2, 0.5, -2});
}

TEST_CASE("lmf_fuse matches a loop reference and the tensor oracle") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = test::random_int(rng, 1, 3);
    std::vector<std::size_t> dims;
    std::vector<Vec> inputs;
    for (std::size_t m = 0; m < n; ++m) {
      dims.push_back(test::random_int(rng, 1, 4));
      inputs.push_back(test::random_vec(rng, dims.back()));
    }
    const auto p = random_lmf(rng, dims, test::random_int(rng, 1, 4), test::random_int(rng, 1, 3));
    const Vec got = lmf_fuse(inputs, p).values;
    const Vec ref = lmf_reference(inputs, p);
    const Vec oracle = tensor_fusion_oracle(inputs, p);
    CHECK(test::max_abs_diff(got.span(), ref.span()) <= 1e-12);
    CHECK(test::max_abs_diff(got.span(), oracle.span()) <= 1e-9);
  }
}

TEST_CASE("lmf of a single modality with rank 1 is an affine map") {
  LmfParams p = LmfParams::zeros(std::vector<std::size_t>{2}, 1, 2);
  p.factors[0][0] = Mat{{1, 2}, {3, 4}, {0.5, -0.5}};
  CHECK(lmf_fuse(std::vector<Vec>{Vec{1, 1}}, p).values == Vec{4.5, 5.5});
}

TEST_CASE("tensor oracle refuses oversized tensors") {
  const auto at_cap = LmfParams::zeros(std::vector<std::size_t>{999, 999}, 1, 1);
  CHECK(tensor_fusion_oracle(std::vector<Vec>{Vec(999), Vec(999)}, at_cap) == Vec{0.0});
  const auto over = LmfParams::zeros(std::vector<std::size_t>{1000, 999}, 1, 1);
  CHECK_THROWS_AS(tensor_fusion_oracle(std::vector<Vec>{Vec(1000), Vec(999)}, over), UsageError);
}

TEST_CASE("lmf validates rank and input shapes") {
  const std::vector<std::size_t> dims{2, 3};
  LmfParams p = LmfParams::zeros(dims, 2, 2);
  CHECK_NOTHROW(p.validate());
  CHECK_THROWS_AS(lmf_fuse(std::vector<Vec>{Vec(2), Vec(2)}, p), DimensionError);
  CHECK_THROWS_AS(lmf_fuse(std::vector<Vec>{Vec(2)}, p), DimensionError);
  p.rank = 0;
  p.factors[0].clear();
  p.factors[1].clear();
  CHECK_THROWS_AS(p.validate(), UsageError);
}

TEST_CASE("fused_dim per method") {
  const std::vector<std::size_t> dims{4, 4, 4};
  CHECK(fused_dim(FusionMethod::kConcat, dims, 7) == 12);
  CHECK(fused_dim(FusionMethod::kMultConcat, dims, 7) == 16);
  CHECK(fused_dim(FusionMethod::kLmf, dims, 7) == 7);
}

TEST_CASE("fusion_backward rejects a cache from another method") {
  const std::vector<Vec> inputs{Vec{1, 2}, Vec{3, 4}};
  FusionCache cache;
  fuse(FusionMethod::kConcat, inputs, nullptr, &cache);
  CHECK_THROWS_AS(fusion_backward(FusionMethod::kMultConcat, cache, Vec(6), nullptr), UsageError);
}

TEST_CASE("fusion_backward matches finite differences of <u, fuse(x)>") {
  std::mt19937_64 rng(21);
  for (auto method : {FusionMethod::kConcat, FusionMethod::kMultConcat, FusionMethod::kLmf}) {
    CAPTURE(fusion_name(method));
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t n = test::random_int(rng, 1, 3);
      const std::size_t h = test::random_int(rng, 1, 4);
      std::vector<std::size_t> dims;
      std::vector<Vec> inputs;
      for (std::size_t m = 0; m < n; ++m) {
        dims.push_back(method == FusionMethod::kLmf ? test::random_int(rng, 1, 3) : h);
        inputs.push_back(test::random_vec(rng, dims.back()));
      }
      LmfParams lmf = random_lmf(rng, dims, test::random_int(rng, 1, 3), 3);
      const LmfParams* lp = method == FusionMethod::kLmf ? &lmf : nullptr;
      FusionCache cache;
      const Vec fused = fuse(method, inputs, lp, &cache).values;
      const Vec u = test::random_vec(rng, fused.dim());
      const auto grads = fusion_backward(method, cache, u, lp);

      for (std::size_t m = 0; m < n; ++m) {
        const auto f = [&](const Vec& x) {
          auto probe = inputs;
          probe[m] = x;
          return dot(u, fuse(method, probe, lp, nullptr).values);
        };
        const Vec fd = finite_diff_grad(f, inputs[m], 1e-6);
        CHECK(test::relative_error(grads.inputs[m].span(), fd.span()) <= 1e-7);
      }
      if (method != FusionMethod::kLmf) continue;
      for (std::size_t m = 0; m < n; ++m) {
        for (std::size_t i = 0; i < lmf.rank; ++i) {
          const Mat& factor = lmf.factors[m][i];
          const auto f = [&](const Vec& flat) {
            LmfParams probe = lmf;
            std::copy(flat.begin(), flat.end(), probe.factors[m][i].span().begin());
            return dot(u, lmf_fuse(inputs, probe).values);
          };
          const Vec flat(std::vector<double>(factor.span().begin(), factor.span().end()));
          const Vec fd = finite_diff_grad(f, flat, 1e-6);
          CHECK(test::relative_error(grads.lmf.factors[m][i].span(), fd.span()) <= 1e-7);
        }
      }
    }
  }
}

TEST_CASE("hadamard gradient uses the product of the other inputs") {
  const std::vector<Vec> inputs{Vec{2}, Vec{3}, Vec{5}};
  FusionCache cache;
  fuse(FusionMethod::kMultConcat, inputs, nullptr, &cache);
  // Upstream only on the Z block.
  const auto g = fusion_backward(FusionMethod::kMultConcat, cache, Vec{0, 0, 0, 1}, nullptr);
  CHECK(g.inputs[0] == Vec{15});
  CHECK(g.inputs[1] == Vec{10});
  CHECK(g.inputs[2] == Vec{6});
}

TEST_CASE("project_backward accumulates and masks through relu") {
  Projection p{Mat{{1, 0}, {0, 1}}, Vec{0, 0}};
  ProjectionCache cache;
  project_modality(Vec{2, -1}, p, &cache);
  Projection grads{Mat(2, 2), Vec(2)};
  const Vec dx = project_backward(p, cache, Vec{1, 1}, grads);
  CHECK(dx == Vec{1, 0});
  CHECK(grads.bias == Vec{1, 0});
  CHECK(grads.weight == Mat{{2, -1}, {0, 0}});
  project_backward(p, cache, Vec{1, 1}, grads);
  CHECK(grads.bias == Vec{2, 0});
}
