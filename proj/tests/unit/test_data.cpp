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

#include <set>

#include "doctest.h"
#include "hsfuse/data.hpp"
#include "hsfuse/errors.hpp"
#include "hsfuse/model.hpp"
#include "test_util.hpp"

using namespace hsfuse;

namespace {

std::vector<SampleRecord> numbered_records(std::size_t n, std::size_t labels = 4) {
  std::vector<SampleRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    SampleRecord r;
    r.id = "r" + std::to_string(i);
    r.hs6 = "8471" + std::to_string(10 + i % labels);
    out.push_back(r);
  }
  return out;
}

void check_validation_line(std::string_view text, const std::string& needle) {
  try {
    parse_manifest_text(text);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find(needle) != std::string::npos);
  }
}

}  // namespace

TEST_CASE("manifest lines parse into records") {
  const auto recs = parse_manifest_text(
      R"({"id":"a1","hs6":"610910","D":"red cotton shirt","T":"Tee","C_cat":"apparel","refs":{"I":"img-7"}})"
      "\n\n"
      R"({"id":"a2","hs6":"847130","embeddings":{"I":[0.5,-1]}})"
      "\n");
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].description == "red cotton shirt");
  CHECK(recs[0].text(Modality::kTitle) == "Tee");
  CHECK(recs[0].text(Modality::kCategory) == "apparel");
  CHECK(recs[0].embedding_ref(Modality::kImage) == "img-7");
  CHECK(recs[0].embedding_ref(Modality::kDescription) == "a1");
  CHECK(recs[1].line == 3);
  CHECK(recs[1].inline_embeddings.at(Modality::kImage) == Vec{0.5, -1});
}

TEST_CASE("manifest validation names the line") {
  check_validation_line("{\"id\":\"a\",\"hs6\":\"610910\"}\n{\"id\":\"b\"}\n", "manifest line 2");
  check_validation_line("{\"id\":\"a\",\"hs6\":\"61091\"}\n", "six digits");
  check_validation_line("{\"id\":\"a\",\"hs6\":\"610910\",\"price\":3}\n", "unknown field 'price'");
  check_validation_line("{\"id\":\"a\",\"hs6\":\"610910\"}\n{\"id\":\"a\",\"hs6\":\"610910\"}\n", "line 2");
  check_validation_line("{\"id\":\"a b\",\"hs6\":\"610910\"}\n", "whitespace");
  check_validation_line("{\"id\":\"a\",\"hs6\":\"610910\"\n", "manifest line 1");
  check_validation_line("{\"id\":\"a\",\"hs6\":\"610910\",\"refs\":{\"X\":\"q\"}}\n", "manifest line 1");
  check_validation_line("{\"id\":\"a\",\"hs6\":\"610910\",\"embeddings\":{\"I\":[1,\"x\"]}}\n",
                        "finite numbers");
}

TEST_CASE("unlabelled manifests are accepted when labels are optional") {
  const auto recs = parse_manifest_text("{\"id\":\"q\",\"D\":\"boots\"}\n", false);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].hs6.empty());
}

TEST_CASE("manifest write/parse round-trip") {
  auto recs = parse_manifest_text(
      R"({"id":"a1","hs6":"610910","D":"red \"cotton\" shirt","refs":{"I":"img-7"},"embeddings":{"T":[0.1,0.30000000000000004]}})"
      "\n");
  const auto again = parse_manifest_text(manifest_line(recs[0]) + "\n");
  CHECK(again[0].description == recs[0].description);
  CHECK(again[0].embedding_refs == recs[0].embedding_refs);
  CHECK(again[0].inline_embeddings.at(Modality::kTitle) ==
        recs[0].inline_embeddings.at(Modality::kTitle));
}

TEST_CASE("label vocabulary is sorted and indexable") {
  auto recs = numbered_records(10, 3);
  const auto vocab = build_label_vocab(recs);
  CHECK(vocab.codes() == std::vector<std::string>{"847110", "847111", "847112"});
  CHECK(vocab.index_of("847111") == 1u);
  CHECK_FALSE(vocab.index_of("000000").has_value());
  CHECK_THROWS_AS(LabelVocab({"12345"}), ValidationError);
  CHECK_THROWS_AS(LabelVocab({"123456", "123456"}), ValidationError);
  CHECK_THROWS_AS(build_label_vocab(std::vector<SampleRecord>{}), UsageError);
}

TEST_CASE("embedding files round-trip exactly") {
  std::mt19937_64 rng(2);
  EmbeddingTable t(Modality::kImage, 5);
  for (int i = 0; i < 20; ++i) t.insert("img-" + std::to_string(i), test::random_vec(rng, 5, 1e3));
  t.insert("tiny", Vec{1e-300, -4.9e-324, 0.1, 1.0 / 3.0, -0.0});
  const auto text = serialize_embedding_table(t);
  CHECK(text.starts_with("#embeddings v1 modality=I dim=5 count=21\n"));
  CHECK(parse_embedding_text(text) == t);

  const auto dir = test::scratch_dir("emb");
  write_embedding_file(t, dir / "i.emb");
  const auto back = read_embedding_file(dir / "i.emb");
  CHECK(back == t);
  CHECK(back.ids() == t.ids());
  std::filesystem::remove_all(dir);
}

TEST_CASE("embedding file errors") {
  CHECK_THROWS_AS(parse_embedding_text("a 1 2\n"), FormatError);
  CHECK_THROWS_AS(parse_embedding_text("#embeddings v1 modality=I dim=2 count=1\na 1\n"), FormatError);
  CHECK_THROWS_AS(parse_embedding_text("#embeddings v1 modality=I dim=2 count=2\na 1 2\n"), FormatError);
  CHECK_THROWS_AS(parse_embedding_text("#embeddings v1 modality=I dim=2 count=2\na 1 2\na 3 4\n"),
                  FormatError);
  CHECK_THROWS_AS(parse_embedding_text("#embeddings v1 modality=I dim=1 count=1\na nan\n"), FormatError);
  CHECK_THROWS_AS(parse_embedding_text("#embeddings v1 modality=Q dim=1 count=0\n"), FormatError);
  try {
    parse_embedding_text("#embeddings v1 modality=T dim=2 count=2\na 1 2\nb 1 x\n", "t.emb");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("t.emb: line 3") != std::string::npos);
  }
}

TEST_CASE("split sizes follow floor(ratio * n) for val and test") {
  const auto recs = numbered_records(2144);
  const auto s = split_dataset(recs, {}, 42);
  CHECK(s.count(Split::kTrain) == 1716);
  CHECK(s.count(Split::kVal) == 214);
  CHECK(s.count(Split::kTest) == 214);
  CHECK(s.by_id.size() == 2144);

  const auto ten = split_dataset(numbered_records(10), {}, 1);
  CHECK(ten.count(Split::kVal) == 1);
  CHECK(ten.count(Split::kTest) == 1);
  CHECK(ten.count(Split::kTrain) == 8);
}

TEST_CASE("split is deterministic in the seed") {
  const auto recs = numbered_records(200);
  const auto a = split_dataset(recs, {}, 5);
  const auto b = split_dataset(recs, {}, 5);
  const auto c = split_dataset(recs, {}, 6);
  CHECK(a.by_id == b.by_id);
  CHECK_FALSE(a.by_id == c.by_id);
}

TEST_CASE("stratified split applies the rule per label") {
  const auto recs = numbered_records(400, 4);
  const auto s = split_dataset(recs, {}, 9, true);
  std::map<std::string, std::map<Split, std::size_t>> counts;
  for (const auto& r : recs) ++counts[r.hs6][s.by_id.at(r.id)];
  for (const auto& [label, c] : counts) {
    CHECK(c.at(Split::kTrain) == 80);
    CHECK(c.at(Split::kVal) == 10);
    CHECK(c.at(Split::kTest) == 10);
  }
}

TEST_CASE("split preconditions") {
  CHECK_THROWS_AS(split_dataset(numbered_records(2), {}, 1), UsageError);
  CHECK_THROWS_AS(split_dataset(numbered_records(10), {0.5, 0.1, 0.1}, 1), UsageError);
  CHECK(parse_split("validation") == Split::kVal);
  CHECK_THROWS_AS(parse_split("holdout"), UsageError);
}

TEST_CASE("assemble joins tables by embedding id and keeps manifest order") {
  auto recs = numbered_records(12, 2);
  recs[3].embedding_refs[Modality::kImage] = "shared";
  EmbeddingTable img(Modality::kImage, 2), desc(Modality::kDescription, 1);
  for (const auto& r : recs) {
    const auto ref = r.embedding_ref(Modality::kImage);
    if (img.find(ref) == nullptr) img.insert(ref, Vec{1, static_cast<double>(r.line)});
    desc.insert(r.id, Vec{0.5});
  }
  const std::vector<EmbeddingTable> tables{img, desc};
  const auto vocab = build_label_vocab(recs);
  const auto split = split_dataset(recs, {}, 3);
  const auto data = assemble_dataset(recs, tables, vocab, split);
  CHECK(data.train.size() + data.val.size() + data.test.size() == 12);
  std::size_t last = 0;
  for (const auto& s : data.train) {
    const auto idx = std::stoul(s.id.substr(1));
    CHECK(idx >= last);
    last = idx;
    CHECK(s.inputs.size() == 2);
    CHECK(s.inputs[0].modality == Modality::kImage);
    CHECK(s.label == *vocab.index_of(recs[idx].hs6));
  }

  EmbeddingTable partial(Modality::kImage, 2);
  partial.insert("r0", Vec{1, 1});
  const std::vector<EmbeddingTable> missing{partial};
  try {
    assemble_dataset(recs, missing, vocab, split);
    FAIL("expected JoinError");
  } catch (const JoinError& e) {
    CHECK(std::string(e.what()).find("r1/I") != std::string::npos);
  }
}
