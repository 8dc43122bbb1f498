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

// Label-aligned attention over chunk states.
//
//   lsa:  label-wise self-attention with learned per-label scoring rows.
//   lcca: label embeddings attend over each chunk.
//   kcca: selected knowledge embeddings attend over the whole document.
//
// Every mechanism returns an (L_n, d) representation and the softmax weights
// it used. Weight matrices (out, in) are applied as x * W^T.

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "kgc/autograd.hpp"

namespace kgc {

struct AttentionParams {
  Param w1;  // (d_a, d)
  Param w2;  // (L_n, d_a)
  Param w3;  // (d, d)
  Param w4;  // (d, d)
  Param lcca_q, lcca_k, lcca_v;  // (d, d)
  Param kcca_q, kcca_k, kcca_v;  // (d, d)
  Param wg;                      // (d, d)

  static AttentionParams init(int d, int d_a, int n_labels, std::mt19937_64& rng);

  std::vector<const Param*> lsa_params() const { return {&w1, &w2, &w3}; }
  std::vector<const Param*> lcca_params() const { return {&lcca_q, &lcca_k, &lcca_v, &w4}; }
  std::vector<const Param*> kcca_params() const { return {&kcca_q, &kcca_k, &kcca_v, &wg}; }
  std::vector<const Param*> params() const;
};

/// Encoder output of one document: chunk c has states h[c] (T, d) and mask[c].
struct ChunkStates {
  std::vector<Var> h;
  std::vector<std::vector<std::uint8_t>> masks;

  /// True when at least one position in some chunk is real.
  bool has_content() const;
};

struct AttentionOutput {
  Var rep;  // (L_n, d)
  /// lsa/lcca: one (L_n, T) matrix per chunk; an all-padding chunk gets zeros.
  /// kcca: a single (L_n * M, C * T) matrix, code l in rows [l*M, (l+1)*M).
  std::vector<Matrix> weights;
};

AttentionOutput lsa(const ChunkStates& states, const AttentionParams& p);

/// labels: (L_n, d).
AttentionOutput lcca(Var labels, const ChunkStates& states, const AttentionParams& p);

/// k_best: (L_n * M, d) stacked per code; k_avg: (L_n, d). With literal set,
/// the values are the projected K_avg rows and no residual is added.
AttentionOutput kcca(Var k_best, Var k_avg, int m, const ChunkStates& states,
                     const AttentionParams& p, bool literal = false);

}  // namespace kgc
