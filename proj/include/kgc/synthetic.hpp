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

// Deterministic toy corpora whose labels are carried by signature tokens.
//
// Label l owns the words [l*S, (l+1)*S) of the generated word list; the rest
// are background words. Every document contains each signature token of each
// of its labels once, scattered through 20..60 background tokens. The emitted
// knowledge (synonyms, encyclopedia and generated sentences) is built from the
// same signature tokens.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "kgc/corpus.hpp"
#include "kgc/knowledge.hpp"

namespace kgc {

struct SyntheticConfig {
  int n_docs = 64;
  int n_labels = 20;
  int vocab_size = 500;
  std::uint64_t seed = 7;
  int signature_size = 3;
};

struct SyntheticData {
  Corpus corpus;
  SplitAssignment splits;
  /// Raw synonym strings per code, in label order.
  std::vector<std::pair<std::string, std::vector<std::string>>> synonyms;
  /// Encyclopedia and generated entries in export format.
  std::vector<KnowledgeEntry> knowledge;
  /// Signature tokens per label, in label order.
  std::vector<std::vector<std::string>> signatures;
};

/// Word i of the generator's word list (three consonant-vowel syllables).
std::string synthetic_word(int i);
std::string synthetic_code(int label);

/// Throws ConfigError on non-positive arguments or when
/// n_labels * signature_size exceeds vocab_size.
SyntheticData generate_synthetic(const SyntheticConfig& cfg);

/// Writes corpus.jsonl, labels.jsonl, splits.jsonl, synonyms.jsonl,
/// knowledge.jsonl and signatures.jsonl into dir.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

}  // namespace kgc
