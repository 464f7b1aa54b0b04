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
#include "hsfuse/data.hpp"
#include "hsfuse/errors.hpp"
#include "hsfuse/textprep.hpp"
#include "test_util.hpp"

using namespace hsfuse;

namespace {

const FreqDict& shop_dict() {
  static const FreqDict dict = load_freq_dict(test::fixture("ecommerce_words.txt"));
  return dict;
}

using Tokens = std::vector<std::string>;

}  // namespace

TEST_CASE("clean_text keeps lowercase letters and single spaces") {
  CHECK(clean_text("  Red-Cotton  SHIRT, 100%!") == "red cotton shirt");
  CHECK(clean_text("caf\xc3\xa9 2x") == "caf x");
  CHECK(clean_text("") == "");
  CHECK(clean_text("123 !!") == "");
}

TEST_CASE("dictionary parsing") {
  const auto d = parse_freq_dict("# words\nred 10\n\nshirt 5\n");
  CHECK(d.size() == 2);
  CHECK(d.total() == 15);
  CHECK(d.count("red") == 10);
  CHECK(d.count("blue") == 0);
  CHECK(d.max_word_length() == 5);
  CHECK(d.log_prob("red") == doctest::Approx(std::log(10.0 / 15.0)));
  CHECK(d.log_prob("xyz") == doctest::Approx(-std::log(15.0) - 3 * std::log(10.0)));
  CHECK_THROWS_AS(parse_freq_dict("red ten\n"), ValidationError);
  CHECK_THROWS_AS(parse_freq_dict("Red 1\n"), ValidationError);
  CHECK_THROWS_AS(parse_freq_dict("red 0\n"), ValidationError);
  CHECK_THROWS_AS(load_freq_dict("/nonexistent/words.txt"), IoError);
}

TEST_CASE("the shop dictionary fixture loads") {
  CHECK(shop_dict().size() == 1000);
  CHECK(shop_dict().count("shirt") == 42658);
  CHECK(shop_dict().total() == 653512840);
}

TEST_CASE("segmentation of run-together product text") {
  CHECK(segment_words("redcottonshirt", shop_dict()) == Tokens{"red", "cotton", "shirt"});
  CHECK(segment_words("blackleathershoes", shop_dict()) == Tokens{"black", "leather", "shoes"});
  CHECK(segment_words("bluephonecase", shop_dict()) == Tokens{"blue", "phone", "case"});
  CHECK(segment_words("", shop_dict()).empty());
  CHECK_THROWS_AS(segment_words("red shirt", shop_dict()), UsageError);
}

TEST_CASE("segmentation ties go to fewer tokens, then the longer first token") {
  // "ab" and "a"+"b" score the same; one token wins.
  const auto d = parse_freq_dict("a 2\nb 2\nab 1\n");
  CHECK(segment_words("ab", d) == Tokens{"ab"});
  // Two-token splits of "xyz" are both unknown-pair ties; a single unknown
  // token scores higher than any split of unknowns.
  const auto e = parse_freq_dict("q 1\n");
  CHECK(segment_words("xyz", e) == Tokens{"xyz"});
}

TEST_CASE("segmentation equals the enumeration oracle on the shop dictionary") {
  for (const std::string s : {"redshirt", "menswatch", "cottonshirtblue", "shoeswomen",
                              "xqredx", "leatherwatchcase"}) {
    CAPTURE(s);
    const auto dp = segment_words(s, shop_dict());
    const auto oracle = test::segment_oracle(s, shop_dict());
    CHECK(dp == oracle);
    CHECK(segmentation_score(dp, shop_dict()) ==
          doctest::Approx(segmentation_score(oracle, shop_dict())).epsilon(1e-12));
  }
}

TEST_CASE("segmentation equals the oracle on every short string over a tiny dictionary") {
  const auto d = parse_freq_dict("a 40\nab 25\naba 10\nbb 5\nbaab 3\n");
  for (const auto& s : test::all_strings("ab", 9)) {
    CAPTURE(s);
    CHECK(segment_words(s, d) == test::segment_oracle(s, d));
  }
}

TEST_CASE("edit_distance agrees with the recursive definition") {
  const auto words = test::all_strings("abc", 3);
  for (const auto& a : words) {
    for (const auto& b : words) {
      CAPTURE(a);
      CAPTURE(b);
      CHECK(edit_distance(a, b) == test::edit_distance_oracle(a, b));
    }
  }
  CHECK(edit_distance("", "abc") == 3);
  CHECK(edit_distance("kitten", "sitting") == 3);
  CHECK(edit_distance("flaw", "lawn") == 2);
}

TEST_CASE("correction prefers distance 1, then frequency, then the smaller word") {
  CHECK(correct_token("shirt", shop_dict()) == "shirt");
  CHECK(correct_token("cottn", shop_dict()) == "cotton");
  CHECK(correct_token("lether", shop_dict()) == "leather");
  CHECK(correct_token("shoez", shop_dict()) == "shoes");
  CHECK(correct_token("blakc", shop_dict()) == "black");
  CHECK(correct_token("xyzzyq", shop_dict()) == "xyzzyq");

  const auto d = parse_freq_dict("cat 5\ncar 5\ncart 100\ncast 100\n");
  // cat and car are both one edit from "cas"; cast is one edit too and more
  // frequent.
  CHECK(correct_token("cas", d) == "cast");
  // Frequency tie at distance 1 goes to the lexicographically smaller word.
  CHECK(correct_token("ca", d) == "car");
  // Distance 2 only when nothing is at distance 1.
  CHECK(correct_token("cxrtx", d) == "cart");
}

TEST_CASE("correction matches a brute-force scan of the dictionary") {
  const auto d = parse_freq_dict("ab 7\nba 7\nabc 3\nbca 9\ncab 1\naa 2\n");
  for (const auto& t : test::all_strings("abc", 4)) {
    CAPTURE(t);
    std::string expected = t;
    if (!d.contains(t)) {
      for (std::size_t dist : {1u, 2u}) {
        std::uint64_t best = 0;
        std::string pick;
        for (const auto& [w, c] : d.entries()) {
          if (test::edit_distance_oracle(t, w) != dist) continue;
          if (c > best || (c == best && w < pick)) {
            best = c;
            pick = w;
          }
        }
        if (best > 0) {
          expected = pick;
          break;
        }
      }
    }
    CHECK(correct_token(t, d) == expected);
  }
}

TEST_CASE("preprocess cleans, segments and corrects") {
  CHECK(preprocess_text("BlueCotton-Shoez (Mens)", shop_dict()) == "blue cotton shoes mens");
  CHECK(preprocess_text("womens blu jeans", shop_dict()) == "womens blue jeans");
  SampleRecord r;
  r.id = "x";
  r.description = "BlackLeather shoez";
  r.title = "Phne case";
  r.category = "Leathr Wallet";
  const auto p = preprocess_record(r, shop_dict());
  CHECK(p.description == "black leather shoes");
  CHECK(p.title == "phone case");
  CHECK(p.category == "leather wallet");
  CHECK(p.id == "x");
}
