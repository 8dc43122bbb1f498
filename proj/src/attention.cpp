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

#include "kgc/attention.hpp"

#include <algorithm>
#include <cmath>

#include "kgc/error.hpp"

namespace kgc {

namespace {

Matrix uniform(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(c));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = dist(rng);
  return m;
}

bool any_real(const std::vector<std::uint8_t>& mask) {
  return std::any_of(mask.begin(), mask.end(), [](std::uint8_t v) { return v != 0; });
}

void check_states(const ChunkStates& s) {
  if (s.h.empty() || s.h.size() != s.masks.size())
    throw ShapeError("attention: need one mask per chunk and at least one chunk");
  for (std::size_t c = 0; c < s.h.size(); ++c)
    if (static_cast<std::size_t>(s.h[c].rows()) != s.masks[c].size())
      throw ShapeError("attention: chunk " + std::to_string(c) + " mask length mismatch");
  if (!s.has_content()) throw ValidationError("attention: no attendable content in document");
}

}  // namespace

AttentionParams AttentionParams::init(int d, int d_a, int n_labels, std::mt19937_64& rng) {
  if (d <= 0 || d_a <= 0 || n_labels <= 0)
    throw ConfigError("attention dimensions must be positive");
  AttentionParams p;
  p.w1 = Param("attn.w1", uniform(d_a, d, rng));
  p.w2 = Param("attn.w2", uniform(n_labels, d_a, rng));
  p.w3 = Param("attn.w3", uniform(d, d, rng));
  p.w4 = Param("attn.w4", uniform(d, d, rng));
  p.lcca_q = Param("attn.lcca_q", uniform(d, d, rng));
  p.lcca_k = Param("attn.lcca_k", uniform(d, d, rng));
  p.lcca_v = Param("attn.lcca_v", uniform(d, d, rng));
  p.kcca_q = Param("attn.kcca_q", uniform(d, d, rng));
  p.kcca_k = Param("attn.kcca_k", uniform(d, d, rng));
  p.kcca_v = Param("attn.kcca_v", uniform(d, d, rng));
  p.wg = Param("attn.wg", uniform(d, d, rng));
  // Square maps start near the identity so queries and keys are compared in
  // the encoder's own coordinates from the first step.
  for (Param* q : {&p.w3, &p.w4, &p.lcca_q, &p.lcca_k, &p.lcca_v, &p.kcca_q, &p.kcca_k,
                   &p.kcca_v, &p.wg})
    q->value = Matrix::Identity(d, d) + 0.1 * q->value;
  return p;
}

std::vector<const Param*> AttentionParams::params() const {
  std::vector<const Param*> out = lsa_params();
  for (auto* q : lcca_params()) out.push_back(q);
  for (auto* q : kcca_params()) out.push_back(q);
  return out;
}

bool ChunkStates::has_content() const {
  return std::any_of(masks.begin(), masks.end(), any_real);
}

AttentionOutput lsa(const ChunkStates& states, const AttentionParams& p) {
  check_states(states);
  Graph& g = *states.h.front().graph;
  Var w1 = g.param(p.w1);
  Var w2 = g.param(p.w2);
  const Eigen::Index n_labels = p.w2.value.rows();

  AttentionOutput out;
  std::vector<Var> ctx;
  for (std::size_t c = 0; c < states.h.size(); ++c) {
    const Var h = states.h[c];
    if (!any_real(states.masks[c])) {
      out.weights.push_back(Matrix::Zero(n_labels, h.rows()));
      continue;
    }
    Var z = ag::tanh(ag::matmul_nt(h, w1));              // (T, d_a)
    Var alpha = ag::masked_softmax(ag::matmul_nt(w2, z), states.masks[c]);  // (L_n, T)
    out.weights.push_back(alpha.value());
    ctx.push_back(ag::matmul(alpha, h));
  }
  out.rep = ag::matmul_nt(ag::sum(ctx), g.param(p.w3));
  return out;
}

AttentionOutput lcca(Var labels, const ChunkStates& states, const AttentionParams& p) {
  check_states(states);
  Graph& g = *labels.graph;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(labels.cols()));
  Var q = ag::matmul_nt(labels, g.param(p.lcca_q));
  Var wk = g.param(p.lcca_k);
  Var wv = g.param(p.lcca_v);

  AttentionOutput out;
  std::vector<Var> ctx;
  for (std::size_t c = 0; c < states.h.size(); ++c) {
    const Var h = states.h[c];
    if (!any_real(states.masks[c])) {
      out.weights.push_back(Matrix::Zero(labels.rows(), h.rows()));
      continue;
    }
    Var k = ag::matmul_nt(h, wk);
    Var v = ag::matmul_nt(h, wv);
    Var alpha = ag::masked_softmax(ag::scale(ag::matmul_nt(q, k), inv_sqrt), states.masks[c]);
    out.weights.push_back(alpha.value());
    ctx.push_back(ag::matmul(alpha, v));
  }
  out.rep = ag::matmul_nt(ag::sum(ctx), g.param(p.w4));
  return out;
}

AttentionOutput kcca(Var k_best, Var k_avg, int m, const ChunkStates& states,
                     const AttentionParams& p, bool literal) {
  check_states(states);
  if (m < 1 || k_best.rows() != k_avg.rows() * m)
    throw ShapeError("kcca: K_best must hold M rows per code");
  Graph& g = *k_best.graph;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(k_best.cols()));

  Var h_all = states.h.size() == 1 ? states.h.front() : ag::concat_rows(states.h);
  std::vector<std::uint8_t> mask_all;
  for (const auto& mk : states.masks) mask_all.insert(mask_all.end(), mk.begin(), mk.end());

  Var q = ag::matmul_nt(k_best, g.param(p.kcca_q));
  Var k = ag::matmul_nt(h_all, g.param(p.kcca_k));
  Var alpha = ag::masked_softmax(ag::scale(ag::matmul_nt(q, k), inv_sqrt), mask_all);

  AttentionOutput out;
  out.weights.push_back(alpha.value());
  if (literal) {
    // Every value row of code l is K_avg[l], so the pooled output is its projection.
    out.rep = ag::matmul_nt(k_avg, g.param(p.kcca_v));
    return out;
  }
  Var v = ag::matmul_nt(h_all, g.param(p.kcca_v));
  Var u = ag::mean_row_groups(ag::matmul(alpha, v), m);
  out.rep = ag::add(u, ag::matmul_nt(k_avg, g.param(p.wg)));
  return out;
}

}  // namespace kgc
