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

#include "kgc/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "kgc/error.hpp"
#include "kgc/model.hpp"

namespace kgc {

namespace {

double f1(double tp, double fp, double fn) {
  const double den = 2.0 * tp + fp + fn;
  return den == 0.0 ? 0.0 : 2.0 * tp / den;
}

}  // namespace

void EvalBatch::validate() const {
  if (scores.rows() != gold.rows() || scores.cols() != gold.cols())
    throw ShapeError("scores and gold must have the same shape");
  if (!label_thresholds.empty() &&
      static_cast<Eigen::Index>(label_thresholds.size()) != scores.cols())
    throw ShapeError("one threshold per label is required");
  for (Eigen::Index i = 0; i < gold.size(); ++i)
    if (gold.data()[i] != 0.0 && gold.data()[i] != 1.0)
      throw ValidationError("gold matrix must be binary");
}

double EvalBatch::threshold_for(Eigen::Index label) const {
  return label_thresholds.empty() ? threshold : label_thresholds[static_cast<std::size_t>(label)];
}

double micro_f1(const EvalBatch& b) {
  b.validate();
  double tp = 0, fp = 0, fn = 0;
  for (Eigen::Index l = 0; l < b.scores.cols(); ++l) {
    const double t = b.threshold_for(l);
    for (Eigen::Index i = 0; i < b.scores.rows(); ++i) {
      const bool pred = b.scores(i, l) >= t;
      const bool gold = b.gold(i, l) == 1.0;
      tp += pred && gold;
      fp += pred && !gold;
      fn += !pred && gold;
    }
  }
  return f1(tp, fp, fn);
}

double macro_f1(const EvalBatch& b) {
  b.validate();
  if (b.scores.cols() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index l = 0; l < b.scores.cols(); ++l) {
    const double t = b.threshold_for(l);
    double tp = 0, fp = 0, fn = 0;
    for (Eigen::Index i = 0; i < b.scores.rows(); ++i) {
      const bool pred = b.scores(i, l) >= t;
      const bool gold = b.gold(i, l) == 1.0;
      tp += pred && gold;
      fp += pred && !gold;
      fn += !pred && gold;
    }
    total += f1(tp, fp, fn);
  }
  return total / static_cast<double>(b.scores.cols());
}

std::optional<double> roc_auc(std::span<const double> scores, std::span<const double> gold) {
  if (scores.size() != gold.size()) throw ShapeError("roc_auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average 1-based ranks within tied groups.
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  double n_pos = 0, rank_sum = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (gold[i] == 1.0) {
      n_pos += 1;
      rank_sum += rank[i];
    }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

std::optional<double> micro_auc(const EvalBatch& b) {
  b.validate();
  std::vector<double> s(b.scores.data(), b.scores.data() + b.scores.size());
  std::vector<double> g(b.gold.data(), b.gold.data() + b.gold.size());
  return roc_auc(s, g);
}

MacroAuc macro_auc(const EvalBatch& b) {
  b.validate();
  MacroAuc out;
  double total = 0.0;
  int used = 0;
  for (Eigen::Index l = 0; l < b.scores.cols(); ++l) {
    std::vector<double> s(b.scores.col(l).data(), b.scores.col(l).data() + b.scores.rows());
    std::vector<double> g(b.gold.col(l).data(), b.gold.col(l).data() + b.gold.rows());
    const auto a = roc_auc(s, g);
    if (!a) {
      ++out.excluded_labels;
      continue;
    }
    total += *a;
    ++used;
  }
  if (used > 0) out.value = total / used;
  return out;
}

double precision_at_n(const EvalBatch& b, int n) {
  b.validate();
  if (n < 1 || n > b.scores.cols())
    throw ConfigError("P@N needs 1 <= N <= L_n (N=" + std::to_string(n) +
                      ", L_n=" + std::to_string(b.scores.cols()) + ")");
  if (b.scores.rows() == 0) return 0.0;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(b.scores.cols()));
  double total = 0.0;
  for (Eigen::Index i = 0; i < b.scores.rows(); ++i) {
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index x, Eigen::Index y) {
      return b.scores(i, x) > b.scores(i, y);
    });
    int hits = 0;
    for (int k = 0; k < n; ++k) hits += b.gold(i, idx[static_cast<std::size_t>(k)]) == 1.0;
    total += static_cast<double>(hits) / n;
  }
  return total / static_cast<double>(b.scores.rows());
}

Json MetricsReport::to_json() const {
  Json j;
  j["micro_f1"] = micro_f1;
  j["macro_f1"] = macro_f1;
  j["micro_auc"] = micro_auc ? Json(*micro_auc) : Json(nullptr);
  j["macro_auc"] = macro_auc ? Json(*macro_auc) : Json(nullptr);
  for (const auto& [n, v] : p_at_n) j["p_at_" + std::to_string(n)] = v;
  j["n_docs"] = n_docs;
  j["threshold"] = threshold;
  j["config_hash"] = config_hash;
  j["excluded_label_count"] = excluded_label_count;
  return j;
}

MetricsReport MetricsReport::from_json(const Json& j) {
  MetricsReport r;
  r.micro_f1 = j.at("micro_f1").get<double>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  if (!j.at("micro_auc").is_null()) r.micro_auc = j.at("micro_auc").get<double>();
  if (!j.at("macro_auc").is_null()) r.macro_auc = j.at("macro_auc").get<double>();
  for (const auto& [key, value] : j.items())
    if (key.rfind("p_at_", 0) == 0) r.p_at_n.emplace_back(std::stoi(key.substr(5)), value.get<double>());
  std::sort(r.p_at_n.begin(), r.p_at_n.end());
  r.n_docs = j.at("n_docs").get<int>();
  r.threshold = j.at("threshold").get<double>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.excluded_label_count = j.at("excluded_label_count").get<int>();
  return r;
}

MetricsReport compute_report(const EvalBatch& b, std::span<const int> ns,
                             const std::string& config_hash) {
  MetricsReport r;
  r.micro_f1 = micro_f1(b);
  r.macro_f1 = macro_f1(b);
  r.micro_auc = micro_auc(b);
  const MacroAuc ma = macro_auc(b);
  r.macro_auc = ma.value;
  r.excluded_label_count = ma.excluded_labels;
  std::vector<int> sorted(ns.begin(), ns.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (int n : sorted) r.p_at_n.emplace_back(n, precision_at_n(b, n));
  r.n_docs = static_cast<int>(b.scores.rows());
  r.threshold = b.threshold;
  r.config_hash = config_hash;
  return r;
}

Matrix gold_matrix(const Corpus& corpus, const LabelSpace& labels) {
  Matrix g = Matrix::Zero(static_cast<Eigen::Index>(corpus.docs.size()),
                          static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < corpus.docs.size(); ++i)
    for (const auto& code : corpus.docs[i].codes) {
      if (!labels.contains(code))
        throw ValidationError("document " + corpus.docs[i].id + " has code " + code +
                              " outside the model's label space");
      g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(*labels.index_of(code))) = 1.0;
    }
  return g;
}

MetricsReport evaluate(const Model& model, const Corpus& corpus, double threshold,
                       std::span<const int> ns, const std::string& config_hash,
                       const std::vector<double>& label_thresholds) {
  EvalBatch b;
  b.gold = gold_matrix(corpus, model.labels());
  b.scores.resize(b.gold.rows(), b.gold.cols());
  for (std::size_t i = 0; i < corpus.docs.size(); ++i)
    b.scores.row(static_cast<Eigen::Index>(i)) =
        predict_scores(model, corpus.docs[i].text).transpose();
  b.threshold = threshold;
  b.label_thresholds = label_thresholds;
  return compute_report(b, ns, config_hash);
}

}  // namespace kgc
