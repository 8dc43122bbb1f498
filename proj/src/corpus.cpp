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

#include "kgc/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "kgc/error.hpp"
#include "kgc/io.hpp"

namespace kgc {

namespace fs = std::filesystem;

void LabelSpace::add(const std::string& code, const std::string& description) {
  if (code.empty()) throw ValidationError("empty code in label space");
  if (description.empty()) throw ValidationError("code " + code + " has an empty description");
  if (index_.count(code)) throw ValidationError("duplicate code in label space: " + code);
  index_.emplace(code, codes_.size());
  codes_.push_back(code);
  descriptions_.push_back(description);
}

const std::string& LabelSpace::description(const std::string& code) const {
  auto it = index_.find(code);
  if (it == index_.end()) throw ValidationError("code not in label space: " + code);
  return descriptions_[it->second];
}

std::optional<std::size_t> LabelSpace::index_of(const std::string& code) const {
  auto it = index_.find(code);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string LabelSpace::hash() const {
  std::string buf;
  for (std::size_t i = 0; i < codes_.size(); ++i) {
    buf += codes_[i];
    buf += '\x1f';
    buf += descriptions_[i];
    buf += '\x1e';
  }
  return hash_hex(buf);
}

std::vector<double> Corpus::gold_vector(std::size_t i) const {
  std::vector<double> y(labels.size(), 0.0);
  for (const auto& c : docs.at(i).codes) y[*labels.index_of(c)] = 1.0;
  return y;
}

LabelSpace load_label_space(const fs::path& path) {
  LabelSpace labels;
  read_jsonl(path, [&](const Json& rec, std::size_t line) {
    if (!rec.contains("code") || !rec["code"].is_string())
      throw ParseError(path.string(), line, "missing string field 'code'");
    if (!rec.contains("description") || !rec["description"].is_string())
      throw ParseError(path.string(), line, "missing string field 'description'");
    try {
      labels.add(rec["code"].get<std::string>(), rec["description"].get<std::string>());
    } catch (const ValidationError& e) {
      throw ParseError(path.string(), line, e.what());
    }
  });
  return labels;
}

void save_label_space(const LabelSpace& labels, const fs::path& path) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out += Json{{"code", labels.code(i)}, {"description", labels.description(i)}}.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

Corpus load_corpus(const fs::path& path, const std::optional<LabelSpace>& labels) {
  Corpus corpus;
  std::set<std::string> seen;
  std::set<std::string> all_codes;
  std::set<std::string> offending;
  read_jsonl(path, [&](const Json& rec, std::size_t line) {
    if (!rec.contains("id") || !rec["id"].is_string())
      throw ParseError(path.string(), line, "missing string field 'id'");
    if (!rec.contains("text") || !rec["text"].is_string())
      throw ParseError(path.string(), line, "missing string field 'text'");
    if (!rec.contains("codes") || !rec["codes"].is_array())
      throw ParseError(path.string(), line, "missing array field 'codes'");
    Document doc;
    doc.id = rec["id"].get<std::string>();
    doc.text = rec["text"].get<std::string>();
    std::set<std::string> codes;
    for (const auto& c : rec["codes"]) {
      if (!c.is_string()) throw ParseError(path.string(), line, "non-string code");
      codes.insert(c.get<std::string>());
    }
    doc.codes.assign(codes.begin(), codes.end());
    if (!seen.insert(doc.id).second)
      throw ValidationError("duplicate document id: " + doc.id);
    for (const auto& c : doc.codes) {
      all_codes.insert(c);
      if (labels && !labels->contains(c)) offending.insert(c);
    }
    corpus.docs.push_back(std::move(doc));
  });
  if (!offending.empty()) {
    std::string list;
    for (const auto& c : offending) list += (list.empty() ? "" : ", ") + c;
    throw ValidationError("codes outside the label space: " + list);
  }
  if (labels) {
    corpus.labels = *labels;
  } else {
    for (const auto& c : all_codes) corpus.labels.add(c, c);
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const fs::path& path) {
  std::string out;
  for (const auto& d : corpus.docs) {
    out += Json{{"id", d.id}, {"text", d.text}, {"codes", d.codes}}.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

Vocab::Vocab() {
  add("<pad>");
  add("<unk>");
  add("<cls>");
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 3 || tokens[0] != "<pad>" || tokens[1] != "<unk>" || tokens[2] != "<cls>")
    throw ValidationError("vocab must start with <pad>, <unk>, <cls>");
  Vocab v;
  for (std::size_t i = 3; i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw ValidationError("duplicate vocab token: " + tokens[i]);
    v.add(tokens[i]);
  }
  return v;
}

int Vocab::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

int Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return ids_.count(std::string(token)) != 0; }

std::string Vocab::hash() const {
  std::string buf;
  for (const auto& t : tokens_) {
    buf += t;
    buf += '\x1f';
  }
  return hash_hex(buf);
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocab build_vocab(const Corpus& corpus, int min_freq) {
  if (corpus.empty()) throw ValidationError("cannot build a vocabulary from an empty corpus");
  if (min_freq < 1) throw ConfigError("min_freq must be >= 1");
  std::unordered_map<std::string, int> counts;
  for (const auto& d : corpus.docs)
    for (auto& t : split_tokens(d.text)) ++counts[t];
  std::vector<std::pair<std::string, int>> kept;
  for (auto& [t, n] : counts)
    if (n >= min_freq) kept.emplace_back(t, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocab v;
  for (auto& [t, n] : kept) v.add(t);
  return v;
}

std::vector<int> tokenize(std::string_view text, const Vocab& vocab) {
  std::vector<int> ids;
  for (const auto& t : split_tokens(text)) ids.push_back(vocab.id(t));
  return ids;
}

int Chunk::real_tokens() const {
  return static_cast<int>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

void ChunkingConfig::validate() const {
  if (chunk_size <= 0) throw ConfigError("chunk_size must be positive");
  if (max_length <= 0 || max_length % chunk_size != 0)
    throw ConfigError("max_length (" + std::to_string(max_length) +
                      ") must be a positive multiple of chunk_size (" +
                      std::to_string(chunk_size) + ")");
  if (stride < 0 || stride > chunk_size) throw ConfigError("stride must be in [1, chunk_size]");
}

std::vector<Chunk> chunk(std::span<const int> token_ids, const ChunkingConfig& cfg,
                         const std::string& doc_id) {
  cfg.validate();
  const int n = std::min<int>(static_cast<int>(token_ids.size()), cfg.max_length);
  const int t = cfg.chunk_size;
  const int s = cfg.effective_stride();
  std::vector<Chunk> out;
  int start = 0;
  do {
    Chunk c;
    c.doc_id = doc_id;
    c.index = static_cast<int>(out.size());
    c.token_ids.assign(static_cast<std::size_t>(t), Vocab::kPad);
    c.mask.assign(static_cast<std::size_t>(t), 0);
    const int end = std::min(n, start + t);
    for (int i = start; i < end; ++i) {
      c.token_ids[static_cast<std::size_t>(i - start)] = token_ids[static_cast<std::size_t>(i)];
      c.mask[static_cast<std::size_t>(i - start)] = 1;
    }
    out.push_back(std::move(c));
    if (start + t >= n) break;
    start += s;
  } while (true);
  return out;
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  throw ValidationError("unknown split name: " + std::string(s));
}

SplitAssignment load_splits(const fs::path& path) {
  SplitAssignment out;
  read_jsonl(path, [&](const Json& rec, std::size_t line) {
    if (!rec.contains("id") || !rec["id"].is_string() || !rec.contains("split") ||
        !rec["split"].is_string())
      throw ParseError(path.string(), line, "expected {\"id\": str, \"split\": str}");
    try {
      out[rec["id"].get<std::string>()] = parse_split(rec["split"].get<std::string>());
    } catch (const ValidationError& e) {
      throw ParseError(path.string(), line, e.what());
    }
  });
  return out;
}

void save_splits(const SplitAssignment& splits, const fs::path& path) {
  std::string out;
  for (const auto& [id, s] : splits) {
    out += Json{{"id", id}, {"split", std::string(to_string(s))}}.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

SplitCorpora split(const Corpus& corpus, const SplitAssignment& assignment) {
  SplitCorpora out;
  out.train.labels = out.dev.labels = out.test.labels = corpus.labels;
  std::set<std::string> ids;
  for (const auto& d : corpus.docs) {
    ids.insert(d.id);
    auto it = assignment.find(d.id);
    if (it == assignment.end()) throw ValidationError("document not assigned to a split: " + d.id);
    switch (it->second) {
      case Split::kTrain: out.train.docs.push_back(d); break;
      case Split::kDev: out.dev.docs.push_back(d); break;
      case Split::kTest: out.test.docs.push_back(d); break;
    }
  }
  for (const auto& [id, s] : assignment)
    if (!ids.count(id)) throw ValidationError("split assignment names unknown document: " + id);
  if (out.dev.empty()) spdlog::warn("dev split is empty");
  if (out.test.empty()) spdlog::warn("test split is empty");
  return out;
}

}  // namespace kgc
