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

// Slow, literal reference implementations of the evaluation metrics, written
// from the definitions rather than from the library code.

#pragma once

#include <algorithm>
#include <optional>
#include <random>
#include <vector>

#include "kgc/autograd.hpp"

namespace kgc::reference {

struct Counts {
  double tp = 0, fp = 0, fn = 0;
};

inline Counts count(const Matrix& s, const Matrix& g, double t, Eigen::Index col = -1) {
  Counts c;
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (Eigen::Index l = 0; l < s.cols(); ++l) {
      if (col >= 0 && l != col) continue;
      const bool p = s(i, l) >= t, y = g(i, l) == 1.0;
      if (p && y) c.tp += 1;
      if (p && !y) c.fp += 1;
      if (!p && y) c.fn += 1;
    }
  return c;
}

inline double f1(const Counts& c) {
  const double den = 2 * c.tp + c.fp + c.fn;
  return den == 0 ? 0.0 : 2 * c.tp / den;
}

inline double micro_f1(const Matrix& s, const Matrix& g, double t) { return f1(count(s, g, t)); }

inline double macro_f1(const Matrix& s, const Matrix& g, double t) {
  double sum = 0;
  for (Eigen::Index l = 0; l < s.cols(); ++l) sum += f1(count(s, g, t, l));
  return sum / static_cast<double>(s.cols());
}

/// Fraction of (positive, negative) pairs ranked correctly, ties half.
inline std::optional<double> pairwise_auc(const std::vector<double>& s, const std::vector<double>& g) {
  double good = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (g[i] != 1.0 || g[j] != 0.0) continue;
      pairs += 1;
      good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  if (pairs == 0) return std::nullopt;
  return good / pairs;
}

inline std::optional<double> micro_auc(const Matrix& s, const Matrix& g) {
  std::vector<double> sv, gv;
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (Eigen::Index l = 0; l < s.cols(); ++l) {
      sv.push_back(s(i, l));
      gv.push_back(g(i, l));
    }
  return pairwise_auc(sv, gv);
}

inline std::optional<double> macro_auc(const Matrix& s, const Matrix& g, int* excluded = nullptr) {
  double sum = 0;
  int used = 0, skipped = 0;
  for (Eigen::Index l = 0; l < s.cols(); ++l) {
    std::vector<double> sv, gv;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      sv.push_back(s(i, l));
      gv.push_back(g(i, l));
    }
    if (auto a = pairwise_auc(sv, gv)) {
      sum += *a;
      ++used;
    } else {
      ++skipped;
    }
  }
  if (excluded) *excluded = skipped;
  if (used == 0) return std::nullopt;
  return sum / used;
}

inline double precision_at(const Matrix& s, const Matrix& g, int n) {
  double total = 0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(s.cols()));
    for (Eigen::Index l = 0; l < s.cols(); ++l) order[static_cast<std::size_t>(l)] = l;
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return s(i, a) > s(i, b); });
    double hits = 0;
    for (int k = 0; k < n; ++k) hits += g(i, order[static_cast<std::size_t>(k)]);
    total += hits / n;
  }
  return total / static_cast<double>(s.rows());
}

/// Scores on a coarse grid so that ties actually occur.
struct Instance {
  Matrix scores, gold;
  double threshold;
};

inline Instance random_instance(std::mt19937_64& rng) {
  const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 8);
  const Eigen::Index l = 1 + static_cast<Eigen::Index>(rng() % 10);
  Instance in{Matrix(n, l), Matrix(n, l), 0.05 + 0.1 * static_cast<double>(rng() % 10)};
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < l; ++j) {
      in.scores(i, j) = static_cast<double>(rng() % 11) / 10.0;
      in.gold(i, j) = rng() % 3 == 0 ? 1.0 : 0.0;
    }
  return in;
}

}  // namespace kgc::reference
