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

// Per-code selection of the M most mutually dissimilar knowledge entries
// (maximum diversity problem) and the static knowledge matrix built from them.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kgc/autograd.hpp"
#include "kgc/knowledge.hpp"
#include "kgc/sentence_encoder.hpp"

namespace kgc {

/// 1 - cosine(a, b). Throws on zero norm or dimension mismatch.
double dissimilarity(const Vector& a, const Vector& b);

Matrix dissimilarity_matrix(std::span<const Vector> embeddings);

/// Sum of D(i, j) over pairs i < j of the subset.
double mdp_objective(const Matrix& dis, std::span<const int> subset);

inline constexpr int kExactSolverCap = 16;

/// Exhaustive search over all subsets of size min(m, N); ties go to the
/// lexicographically smallest index set. N above `cap` throws ConfigError.
std::vector<int> solve_mdp_exact(const Matrix& dis, int m, int cap = kExactSolverCap);

/// Seeds with the most dissimilar pair (index 0 alone when m == 1) and adds
/// the index with the largest summed dissimilarity to the current set until
/// min(m, N) are chosen. Ties go to the lowest index. Result is ascending.
std::vector<int> solve_mdp_greedy(const Matrix& dis, int m);

/// Encodes every entry; order preserved.
std::vector<Vector> embed_entries(std::span<const KnowledgeEntry> entries,
                                  const SentenceEncoder& encoder);

struct CodeKnowledge {
  std::string code;
  std::vector<KnowledgeEntry> selected;  // chosen candidates, ascending candidate order
  std::vector<int> candidate_ids;        // index of each selected entry among the candidates
  std::vector<int> row_entry;            // length M: which selected entry fills each row
  Matrix rows;                           // (M, d)
  Vector avg;                            // row mean of `rows`
};

/// Selects and stacks one code's knowledge. Uses the exact solver when the
/// candidate count is within `exact_cap`, the greedy one otherwise; fewer
/// than M selected entries are repeated cyclically to fill M rows.
CodeKnowledge select_code_knowledge(const std::string& code,
                                    std::span<const KnowledgeEntry> candidates,
                                    const SentenceEncoder& encoder, int m,
                                    int exact_cap = kExactSolverCap);

std::string knowledge_config_hash(int m, const SourceSet& sources, const std::string& encoder_id);

class KnowledgeMatrix {
 public:
  int m = 0;
  Eigen::Index dim = 0;
  std::string config_hash;
  std::string encoder_id;
  std::string sources;
  std::vector<CodeKnowledge> codes;  // label-space order

  const CodeKnowledge& at(const std::string& code) const;

  /// (L_n * M, d): code l occupies rows [l*M, (l+1)*M).
  Matrix stacked_rows() const;
  /// (L_n, d)
  Matrix stacked_avg() const;

  void save(const std::filesystem::path& path) const;
  /// Throws ConfigError when expected_hash is non-empty and differs.
  static KnowledgeMatrix load(const std::filesystem::path& path,
                              const std::string& expected_hash = {});
};

KnowledgeMatrix build_knowledge_matrix(const KnowledgeBase& kb, const SentenceEncoder& encoder,
                                       int m, const SourceSet& sources,
                                       int exact_cap = kExactSolverCap);

}  // namespace kgc
