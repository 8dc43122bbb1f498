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

// Multi-label evaluation: F1, ROC AUC and precision at N.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgc/autograd.hpp"
#include "kgc/corpus.hpp"
#include "kgc/io.hpp"

namespace kgc {

class Model;

/// scores and gold are (n_docs, L_n). A cell is predicted positive when
/// score >= threshold; a non-empty label_thresholds overrides it per label.
struct EvalBatch {
  Matrix scores;
  Matrix gold;
  double threshold = 0.5;
  std::vector<double> label_thresholds;

  void validate() const;
  double threshold_for(Eigen::Index label) const;
};

double micro_f1(const EvalBatch& b);
/// Mean over every label of the label's F1, where 0/0 counts as 0.
double macro_f1(const EvalBatch& b);

/// Rank-sum AUC with ties counted as one half. nullopt without both classes.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const double> gold);

std::optional<double> micro_auc(const EvalBatch& b);

struct MacroAuc {
  std::optional<double> value;
  int excluded_labels = 0;  // labels lacking a positive or a negative
};
MacroAuc macro_auc(const EvalBatch& b);

/// Mean over documents of |top-n ∩ gold| / n; ties go to the lower label
/// index. Throws ConfigError unless 1 <= n <= L_n.
double precision_at_n(const EvalBatch& b, int n);

struct MetricsReport {
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> micro_auc;
  std::optional<double> macro_auc;
  std::vector<std::pair<int, double>> p_at_n;
  int n_docs = 0;
  double threshold = 0.5;
  std::string config_hash;
  int excluded_label_count = 0;

  Json to_json() const;
  static MetricsReport from_json(const Json& j);
};

MetricsReport compute_report(const EvalBatch& b, std::span<const int> ns,
                             const std::string& config_hash);

/// Gold matrix (n_docs, L_n) of a corpus under the given label space.
Matrix gold_matrix(const Corpus& corpus, const LabelSpace& labels);

/// Scores every document with the model and reports at `threshold`.
MetricsReport evaluate(const Model& model, const Corpus& corpus, double threshold,
                       std::span<const int> ns, const std::string& config_hash,
                       const std::vector<double>& label_thresholds = {});

}  // namespace kgc
