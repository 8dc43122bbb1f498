// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "catch_amalgamated.hpp"
#include "kgc/corpus.hpp"
#include "kgc/error.hpp"
#include "kgc/synthetic.hpp"
#include "support.hpp"

using namespace kgc;
using Catch::Matchers::ContainsSubstring;

namespace {

void write(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p) << s;
}

std::vector<int> iota_ids(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 3);
  return v;
}

}  // namespace

TEST_CASE("load_corpus reads records and derives a label space") {
  const auto dir = testing::temp_dir("corpus_load");
  write(dir / "c.jsonl",
        R"({"id":"d1","text":"chest pain","codes":["786.5","401.9"]})"
        "\n"
        R"({"id":"d2","text":"fever","codes":[]})"
        "\n");
  const Corpus c = load_corpus(dir / "c.jsonl");
  REQUIRE(c.size() == 2);
  CHECK(c.labels.codes() == std::vector<std::string>{"401.9", "786.5"});
  CHECK(c.docs[0].codes == std::vector<std::string>{"401.9", "786.5"});
}

TEST_CASE("load_corpus rejects duplicates, unknown codes and bad lines") {
  const auto dir = testing::temp_dir("corpus_errors");
  write(dir / "dup.jsonl",
        R"({"id":"d1","text":"a","codes":[]})"
        "\n"
        R"({"id":"d1","text":"b","codes":[]})"
        "\n");
  CHECK_THROWS_WITH(load_corpus(dir / "dup.jsonl"), ContainsSubstring("d1"));

  LabelSpace ls;
  ls.add("401.9", "hypertension");
  write(dir / "unk.jsonl", R"({"id":"d1","text":"a","codes":["X99"]})" "\n");
  CHECK_THROWS_AS(load_corpus(dir / "unk.jsonl", ls), ValidationError);
  CHECK_THROWS_WITH(load_corpus(dir / "unk.jsonl", ls), ContainsSubstring("X99"));

  write(dir / "bad.jsonl", R"({"id":"d1","text":"a","codes":[]})" "\n{not json\n");
  try {
    load_corpus(dir / "bad.jsonl");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("label space files round trip in order") {
  const auto dir = testing::temp_dir("labels_rt");
  LabelSpace ls;
  ls.add("428.0", "heart failure");
  ls.add("250.00", "diabetes");
  save_label_space(ls, dir / "l.jsonl");
  const LabelSpace back = load_label_space(dir / "l.jsonl");
  CHECK(back == ls);
  CHECK(back.code(0) == "428.0");
  CHECK(back.hash() == ls.hash());
  CHECK_THROWS_AS(ls.add("x", ""), ValidationError);
}

TEST_CASE("build_vocab applies min_freq") {
  Corpus c;
  c.docs.push_back({"d", "a a b", {}});
  const Vocab v2 = build_vocab(c, 2);
  CHECK(v2.contains("a"));
  CHECK_FALSE(v2.contains("b"));
  CHECK(v2.size() == 4);
  const Vocab v1 = build_vocab(c, 1);
  CHECK(v1.contains("a"));
  CHECK(v1.contains("b"));
  CHECK_THROWS(build_vocab(Corpus{}, 1));
}

TEST_CASE("tokenize lowercases and maps unknown tokens") {
  const Vocab v = Vocab::from_tokens({"<pad>", "<unk>", "<cls>", "x", "a", "b"});
  CHECK(tokenize("A b", v) == std::vector<int>{4, 5});
  CHECK(tokenize("zzz", v) == std::vector<int>{Vocab::kUnk});
  CHECK(tokenize("", v).empty());
  CHECK(Vocab::kPad != Vocab::kUnk);
  CHECK(Vocab::kUnk != Vocab::kCls);
}

TEST_CASE("chunk cuts, pads and truncates") {
  ChunkingConfig cfg{512, 5120, 0};
  auto two = chunk(iota_ids(1024), cfg);
  REQUIRE(two.size() == 2);
  CHECK(two[1].real_tokens() == 512);

  auto one = chunk(iota_ids(100), cfg);
  REQUIRE(one.size() == 1);
  CHECK(one[0].real_tokens() == 100);
  CHECK(std::count(one[0].mask.begin(), one[0].mask.end(), 0) == 412);
  CHECK(one[0].token_ids[100] == Vocab::kPad);

  auto ten = chunk(iota_ids(6000), cfg);
  REQUIRE(ten.size() == 10);
  CHECK(ten.back().real_tokens() == 512);
  CHECK(ten.back().token_ids.back() == 3 + 5119);

  auto empty = chunk(std::vector<int>{}, cfg);
  REQUIRE(empty.size() == 1);
  CHECK(empty[0].real_tokens() == 0);

  CHECK_THROWS_AS(chunk(iota_ids(10), ChunkingConfig{512, 1000, 0}), ConfigError);
}

TEST_CASE("chunking preserves the truncated token sequence") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int t = 1 + static_cast<int>(rng() % 16);
    const int c_max = 1 + static_cast<int>(rng() % 6);
    const ChunkingConfig cfg{t, t * c_max, 0};
    const int len = static_cast<int>(rng() % 120);
    const auto ids = iota_ids(len);
    const auto chunks = chunk(ids, cfg);
    std::vector<int> joined;
    int real = 0;
    for (const auto& c : chunks) {
      CHECK(static_cast<int>(c.token_ids.size()) == t);
      CHECK(c.index < cfg.max_chunks());
      for (int i = 0; i < t; ++i)
        if (c.mask[static_cast<std::size_t>(i)]) joined.push_back(c.token_ids[static_cast<std::size_t>(i)]);
      real += c.real_tokens();
    }
    const int kept = std::min(len, cfg.max_length);
    CHECK(real == kept);
    CHECK(joined == std::vector<int>(ids.begin(), ids.begin() + kept));
  }
}

TEST_CASE("split partitions and validates assignments") {
  Corpus c;
  c.docs = {{"a", "x", {}}, {"b", "y", {}}, {"c", "z", {}}};
  const SplitCorpora s = split(c, {{"a", Split::kTrain}, {"b", Split::kDev}, {"c", Split::kTest}});
  CHECK(s.train.size() == 1);
  CHECK(s.dev.size() == 1);
  CHECK(s.test.size() == 1);
  CHECK_THROWS_WITH(split(c, {{"a", Split::kTrain}, {"b", Split::kDev}}), ContainsSubstring("c"));
  CHECK_THROWS(split(c, {{"a", Split::kTrain}, {"b", Split::kDev}, {"c", Split::kTest},
                         {"ghost", Split::kTest}}));
  const SplitCorpora all = split(c, {{"a", Split::kTrain}, {"b", Split::kTrain}, {"c", Split::kTrain}});
  CHECK(all.train.size() == 3);
  CHECK(all.dev.empty());
  CHECK(all.test.empty());
}

TEST_CASE("split files round trip") {
  const auto dir = testing::temp_dir("splits_rt");
  const SplitAssignment a{{"a", Split::kTrain}, {"b", Split::kDev}, {"c", Split::kTest}};
  save_splits(a, dir / "s.jsonl");
  CHECK(load_splits(dir / "s.jsonl") == a);
}

TEST_CASE("synthetic corpus is deterministic and signature-recoverable") {
  const SyntheticData a = generate_synthetic({64, 20, 500, 7, 3});
  const SyntheticData b = generate_synthetic({64, 20, 500, 7, 3});
  const auto da = testing::temp_dir("syn_a");
  const auto db = testing::temp_dir("syn_b");
  write_synthetic(a, da);
  write_synthetic(b, db);
  for (const char* f : {"corpus.jsonl", "labels.jsonl", "splits.jsonl", "synonyms.jsonl",
                        "knowledge.jsonl", "signatures.jsonl"})
    CHECK(read_file(da / f) == read_file(db / f));

  // Independent recovery: labels are exactly those whose signature tokens all
  // occur in the text.
  std::set<std::string> seen;
  for (const auto& sig : a.signatures)
    for (const auto& w : sig) CHECK(seen.insert(w).second);
  for (const auto& doc : a.corpus.docs) {
    const auto toks = split_tokens(doc.text);
    std::vector<std::string> recovered;
    for (std::size_t l = 0; l < a.signatures.size(); ++l) {
      int hits = 0;
      for (const auto& w : a.signatures[l]) hits += static_cast<int>(std::count(toks.begin(), toks.end(), w));
      if (hits >= 3) recovered.push_back(a.corpus.labels.code(l));
    }
    CHECK(recovered == doc.codes);
  }
  CHECK(a.splits.size() == 64);
}

TEST_CASE("synthetic corpus argument errors") {
  CHECK_THROWS_AS(generate_synthetic({1, 1, 2, 0, 3}), ConfigError);
  CHECK_THROWS_AS(generate_synthetic({0, 1, 10, 0, 3}), ConfigError);
}
