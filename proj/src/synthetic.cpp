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

#include "kgc/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>

#include "kgc/error.hpp"
#include "kgc/io.hpp"

namespace kgc {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";
constexpr int kSyllables = 14 * 5;
constexpr int kWordSpace = kSyllables * kSyllables * kSyllables;

int draw(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

}  // namespace

std::string synthetic_word(int i) {
  if (i < 0 || i >= kWordSpace) throw ConfigError("synthetic word index out of range");
  int v = static_cast<int>((static_cast<long long>(i) * 7919 + 13) % kWordSpace);
  std::string w;
  for (int s = 0; s < 3; ++s) {
    const int syl = v % kSyllables;
    v /= kSyllables;
    w += kConsonants[static_cast<std::size_t>(syl / 5)];
    w += kVowels[static_cast<std::size_t>(syl % 5)];
  }
  return w;
}

std::string synthetic_code(int label) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%03d.%d", 100 + label / 10, label % 10);
  return buf;
}

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n_docs < 1 || cfg.n_labels < 1 || cfg.vocab_size < 1 || cfg.signature_size < 1)
    throw ConfigError("gen-synthetic arguments must all be >= 1");
  if (static_cast<long long>(cfg.n_labels) * cfg.signature_size > cfg.vocab_size)
    throw ConfigError("n_labels * signature_size (" +
                      std::to_string(cfg.n_labels * cfg.signature_size) +
                      ") exceeds vocab_size (" + std::to_string(cfg.vocab_size) + ")");
  if (cfg.vocab_size > kWordSpace) throw ConfigError("vocab_size too large");

  std::mt19937_64 rng(cfg.seed);
  SyntheticData out;
  const int s = cfg.signature_size;
  for (int l = 0; l < cfg.n_labels; ++l) {
    std::vector<std::string> sig;
    for (int k = 0; k < s; ++k) sig.push_back(synthetic_word(l * s + k));
    out.corpus.labels.add(synthetic_code(l), join(sig, " "));
    out.signatures.push_back(std::move(sig));
  }
  const int bg_lo = cfg.n_labels * s;
  const int bg_hi = cfg.vocab_size - 1;

  for (int i = 0; i < cfg.n_docs; ++i) {
    std::set<int> labels{i % cfg.n_labels};
    const int want = draw(rng, 1, std::min(3, cfg.n_labels));
    while (static_cast<int>(labels.size()) < want) labels.insert(draw(rng, 0, cfg.n_labels - 1));

    std::vector<std::string> tokens;
    if (bg_lo <= bg_hi) {
      const int len = draw(rng, 20, 60);
      for (int t = 0; t < len; ++t) tokens.push_back(synthetic_word(draw(rng, bg_lo, bg_hi)));
    }
    Document doc;
    char id[32];
    std::snprintf(id, sizeof(id), "syn-%05d", i);
    doc.id = id;
    for (int l : labels) {
      for (const auto& w : out.signatures[static_cast<std::size_t>(l)]) {
        const int pos = draw(rng, 0, static_cast<int>(tokens.size()));
        tokens.insert(tokens.begin() + pos, w);
      }
      doc.codes.push_back(synthetic_code(l));
    }
    std::sort(doc.codes.begin(), doc.codes.end());
    doc.text = join(tokens, " ");
    out.corpus.docs.push_back(std::move(doc));
  }

  std::vector<std::size_t> order(static_cast<std::size_t>(cfg.n_docs));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  const auto n = static_cast<std::size_t>(cfg.n_docs);
  const std::size_t n_train = (n * 70 + 50) / 100;
  const std::size_t n_dev = std::min(n - n_train, (n * 15 + 50) / 100);
  for (std::size_t k = 0; k < n; ++k) {
    const Split sp = k < n_train ? Split::kTrain : (k < n_train + n_dev ? Split::kDev : Split::kTest);
    out.splits[out.corpus.docs[order[k]].id] = sp;
  }

  for (int l = 0; l < cfg.n_labels; ++l) {
    const auto& g = out.signatures[static_cast<std::size_t>(l)];
    const std::string code = synthetic_code(l);
    const std::string& a = g[0];
    const std::string& b = g[static_cast<std::size_t>(1 % s)];
    const std::string& c = g[static_cast<std::size_t>(2 % s)];
    out.synonyms.emplace_back(
        code, std::vector<std::string>{b + ", " + c + " and " + a, c + " or " + a + "; " + b,
                                       a + " " + c + " " + b + "."});
    const std::string title = "Synthetic_condition_" + code;
    for (const auto& text : {a + " " + b + " " + c + " disorder", c + " with " + a})
      out.knowledge.push_back({code, Source::kWikipedia, text, "wikipedia/" + title});
    for (const auto& text : {b + " " + c + " finding", a + " " + c + " symptom"})
      out.knowledge.push_back({code, Source::kLlm, text, "llm/synthetic/" + code});
  }
  return out;
}

void write_synthetic(const SyntheticData& data, const fs::path& dir) {
  save_corpus(data.corpus, dir / "corpus.jsonl");
  save_label_space(data.corpus.labels, dir / "labels.jsonl");
  save_splits(data.splits, dir / "splits.jsonl");
  std::string syn, kn, sig;
  for (const auto& [code, list] : data.synonyms)
    syn += Json{{"code", code}, {"synonyms", list}}.dump() + "\n";
  for (const auto& e : data.knowledge) kn += to_json(e).dump() + "\n";
  for (std::size_t l = 0; l < data.signatures.size(); ++l)
    sig += Json{{"code", data.corpus.labels.code(l)}, {"tokens", data.signatures[l]}}.dump() + "\n";
  write_file_atomic(dir / "synonyms.jsonl", syn);
  write_file_atomic(dir / "knowledge.jsonl", kn);
  write_file_atomic(dir / "signatures.jsonl", sig);
}

}  // namespace kgc
