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

// Training configuration, optimizer, early-stopped training loop, decision
// threshold search and model checkpoints.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kgc/corpus.hpp"
#include "kgc/diversity.hpp"
#include "kgc/io.hpp"
#include "kgc/knowledge.hpp"
#include "kgc/model.hpp"

namespace kgc {

std::vector<double> default_threshold_grid();

struct TrainConfig {
  // Defaults follow the published hyper-parameter table where it has one.
  int max_length = 5120;
  int chunk_size = 512;
  int stride = 0;
  int epochs = 20;
  int batch_size = 8;
  int m = 8;
  double lr = 2e-5;
  int warmup_steps = 2000;
  int patience = 3;
  std::uint64_t seed = 0;
  std::string sources = "umls,wikipedia,llm";
  bool lsa = true;
  bool lcca = true;
  bool kcca = true;
  std::vector<double> threshold_grid = default_threshold_grid();
  bool per_label_threshold = false;

  int d = 128;
  int layers = 2;
  int heads = 4;
  int ff = 256;
  int d_a = 0;  // 0 means d
  double dropout = 0.0;
  int conv_filters = 64;
  int conv_kernel = 3;
  double leaky_slope = 0.01;
  int min_freq = 1;
  bool kcca_literal = false;
  bool unfreeze_labels = false;
  int exact_cap = kExactSolverCap;

  void validate() const;
  Json to_json() const;
  /// Starts from `base` and applies every key of j. Unknown keys and
  /// ill-typed values throw ConfigError naming the key.
  static TrainConfig from_json(const Json& j, const TrainConfig& base);
  static TrainConfig from_json(const Json& j);
  /// Applies one key=value override; the value is read as JSON when it
  /// parses and as a plain string otherwise.
  void set(const std::string& key, const std::string& value);

  std::string hash() const;
  SourceSet source_set() const;
  EncoderConfig encoder_config(int vocab_size) const;
  ChunkingConfig chunking() const;
  ModelConfig model_config(int n_labels, int vocab_size) const;
};

TrainConfig load_train_config(const std::filesystem::path& path, const TrainConfig& base);

/// Vocabulary of the training split plus the seeded initial encoder. Both the
/// knowledge matrix and the label matrix are computed with this snapshot.
struct EncoderSnapshot {
  Vocab vocab;
  TransformerEncoder encoder;

  std::string sentence_encoder_id() const;
};

EncoderSnapshot initial_encoder(const TrainConfig& cfg, const Corpus& train);

/// Assembles the untrained model. Throws ConfigError when the knowledge
/// matrix was not built with this snapshot, M and source set.
Model build_model(const TrainConfig& cfg, const EncoderSnapshot& snap, const LabelSpace& labels,
                  const KnowledgeMatrix& km);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Param*> params, AdamConfig cfg = {});
  /// Applies one update from the accumulated gradients, then clears them.
  void step(double lr);
  long steps() const { return t_; }

 private:
  std::vector<Param*> params_;
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

/// Learning rate at 0-based step s: linear warmup to `peak` over `warmup`
/// steps, then linear decay reaching 0 at `total`.
double scheduled_lr(double peak, long step, long warmup, long total);

/// Fisher-Yates shuffle driven by raw mt19937_64 output.
void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng);

/// Eval-mode scores (n_docs, L_n).
Matrix score_corpus(const Model& model, const Corpus& corpus);

/// Grid value with the highest micro-F1; ties go to the smallest value.
double optimize_threshold(const Matrix& scores, const Matrix& gold, std::span<const double> grid);
/// Independent per-label search with the same rule.
std::vector<double> optimize_label_thresholds(const Matrix& scores, const Matrix& gold,
                                              std::span<const double> grid);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> dev_micro_f1;
  double lr = 0.0;
  double wall_time = 0.0;

  Json to_json(bool with_time = true) const;
};

struct TrainResult {
  Model model;  // best-dev parameters
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double threshold = 0.5;
  std::vector<double> label_thresholds;
};

/// Per-document gradients are averaged over each mini-batch. An empty dev
/// corpus disables early stopping and keeps the last epoch.
TrainResult train(const TrainConfig& cfg, Model model, const Corpus& train_set,
                  const Corpus& dev_set,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

struct Checkpoint {
  Model model;
  TrainConfig config;
  std::string config_hash;
  std::string knowledge_hash;
  double threshold = 0.5;
  std::vector<double> label_thresholds;
  int best_epoch = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace kgc
