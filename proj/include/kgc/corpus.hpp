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

// Labeled clinical documents, the label space, the desk-scale vocabulary and
// fixed-length chunking of token sequences.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kgc {

struct Document {
  std::string id;
  std::string text;
  std::vector<std::string> codes;  // sorted, unique
};

/// Ordered code list. Row i of every label-indexed matrix refers to codes()[i].
class LabelSpace {
 public:
  LabelSpace() = default;

  /// Appends a code. Throws ValidationError on duplicates or empty descriptions.
  void add(const std::string& code, const std::string& description);

  std::size_t size() const { return codes_.size(); }
  bool empty() const { return codes_.empty(); }
  const std::vector<std::string>& codes() const { return codes_; }
  const std::string& code(std::size_t i) const { return codes_.at(i); }
  const std::string& description(std::size_t i) const { return descriptions_.at(i); }
  const std::string& description(const std::string& code) const;
  std::optional<std::size_t> index_of(const std::string& code) const;
  bool contains(const std::string& code) const { return index_.count(code) != 0; }

  /// Stable digest of the ordered (code, description) list.
  std::string hash() const;

  bool operator==(const LabelSpace& o) const {
    return codes_ == o.codes_ && descriptions_ == o.descriptions_;
  }

 private:
  std::vector<std::string> codes_;
  std::vector<std::string> descriptions_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Corpus {
  std::vector<Document> docs;
  LabelSpace labels;

  std::size_t size() const { return docs.size(); }
  bool empty() const { return docs.empty(); }
  /// Binary gold vector of document i in label-space order.
  std::vector<double> gold_vector(std::size_t i) const;
};

LabelSpace load_label_space(const std::filesystem::path& path);
void save_label_space(const LabelSpace& labels, const std::filesystem::path& path);

/// Reads {"id","text","codes"} lines. Without a label space one is derived
/// (codes sorted, description = code); with one, unknown codes are rejected.
Corpus load_corpus(const std::filesystem::path& path,
                   const std::optional<LabelSpace>& labels = std::nullopt);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;

  Vocab();
  /// Rebuilds from the full token list (index == id, specials first).
  static Vocab from_tokens(std::vector<std::string> tokens);

  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::string hash() const;

  int add(const std::string& token);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Lowercased whitespace tokens; the only tokenizer the desk-scale encoder uses.
std::vector<std::string> split_tokens(std::string_view text);

/// Tokens occurring at least min_freq times across the corpus, ordered by
/// descending count then lexicographically, after the three specials.
Vocab build_vocab(const Corpus& corpus, int min_freq);

std::vector<int> tokenize(std::string_view text, const Vocab& vocab);

struct Chunk {
  std::string doc_id;
  int index = 0;
  std::vector<int> token_ids;        // length == chunk size
  std::vector<std::uint8_t> mask;    // 1 on real tokens, 0 on padding

  int real_tokens() const;
};

struct ChunkingConfig {
  int chunk_size = 512;
  int max_length = 5120;
  /// Window stride; equal to chunk_size means non-overlapping windows.
  int stride = 0;

  int effective_stride() const { return stride > 0 ? stride : chunk_size; }
  int max_chunks() const { return max_length / chunk_size; }
  void validate() const;
};

/// Truncates to max_length and cuts consecutive windows of chunk_size; the
/// last window is padded. An empty sequence yields one all-padding chunk.
std::vector<Chunk> chunk(std::span<const int> token_ids, const ChunkingConfig& cfg,
                         const std::string& doc_id = {});

enum class Split { kTrain, kDev, kTest };
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

using SplitAssignment = std::map<std::string, Split>;

SplitAssignment load_splits(const std::filesystem::path& path);
void save_splits(const SplitAssignment& splits, const std::filesystem::path& path);

struct SplitCorpora {
  Corpus train;
  Corpus dev;
  Corpus test;
};

/// Partitions the corpus. Every document must be assigned; assignments naming
/// unknown documents are rejected too.
SplitCorpora split(const Corpus& corpus, const SplitAssignment& assignment);

}  // namespace kgc
