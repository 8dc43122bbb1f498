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

// Branch fusion, the convolutional scoring head and the assembled classifier.

#pragma once

#include <array>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kgc/attention.hpp"
#include "kgc/corpus.hpp"
#include "kgc/encoder.hpp"
#include "kgc/io.hpp"

namespace kgc {

struct BranchSwitches {
  bool lsa = true;
  bool lcca = true;
  bool kcca = true;

  bool any() const { return lsa || lcca || kcca; }
};

struct HeadParams {
  Param conv1_w;  // (F, 3 * k1)
  Param conv1_b;  // (F, 1)
  Param conv2_w;  // (1, F)
  Param conv2_b;  // (1, 1)
  int kernel = 3;
  double leaky_slope = 0.01;

  static HeadParams init(int filters, int kernel, double leaky_slope, std::mt19937_64& rng);
  std::vector<const Param*> params() const { return {&conv1_w, &conv1_b, &conv2_w, &conv2_b}; }
};

/// (L_n, 3d): channel c occupies columns [c*d, (c+1)*d) in the order lsa,
/// lcca, kcca. Disabled branches become zero channels and their reps are not
/// read. Throws ConfigError when every branch is disabled.
Var fuse(Graph& g, const std::array<Var, 3>& reps, const BranchSwitches& switches,
         Eigen::Index n_labels, Eigen::Index d);

/// Per-label probabilities (L_n, 1).
Var forward_head(Var fused, const HeadParams& head, Eigen::Index d);

/// Mean BCE of probabilities against a 0/1 target vector; p is clamped to
/// [1e-7, 1 - 1e-7]. Throws ShapeError on length mismatch.
Var bce_loss(Var probs, std::span<const double> targets);

struct ModelConfig {
  EncoderConfig encoder;
  ChunkingConfig chunking;
  int n_labels = 0;
  int d_a = 0;
  int m = 8;
  int conv_filters = 64;
  int conv_kernel = 3;
  double leaky_slope = 0.01;
  BranchSwitches switches;
  bool kcca_literal = false;
  bool unfreeze_labels = false;

  void validate() const;
  Json to_json() const;
  static ModelConfig from_json(const Json& j);
};

class Model {
 public:
  Model() = default;
  /// label_matrix: (L_n, d); k_best: (L_n * M, d); k_avg: (L_n, d). Attention
  /// and head weights are drawn from `seed`.
  Model(ModelConfig cfg, Vocab vocab, LabelSpace labels, TransformerEncoder encoder,
        const Matrix& label_matrix, const Matrix& k_best, const Matrix& k_avg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& mutable_config() { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  const LabelSpace& labels() const { return labels_; }
  const TransformerEncoder& encoder() const { return encoder_; }
  const AttentionParams& attention() const { return attn_; }
  AttentionParams& attention() { return attn_; }
  const HeadParams& head() const { return head_; }
  const Param& label_matrix() const { return label_matrix_; }
  const Param& k_best() const { return k_best_; }
  const Param& k_avg() const { return k_avg_; }

  std::vector<Chunk> chunk_text(const std::string& text, const std::string& doc_id = {}) const;

  /// Every tensor, trainable or not, in a fixed order.
  std::vector<const Param*> params() const;
  std::vector<Param*> params();
  /// Tensors updated by the optimizer given the current switches.
  std::vector<Param*> trainable_params();

  Json to_json() const;
  static Model from_json(const Json& j);

 private:
  ModelConfig cfg_;
  Vocab vocab_;
  LabelSpace labels_;
  TransformerEncoder encoder_;
  AttentionParams attn_;
  HeadParams head_;
  Param label_matrix_;
  Param k_best_;
  Param k_avg_;
};

struct ForwardPass {
  Var probs;  // (L_n, 1)
  std::optional<AttentionOutput> lsa, lcca, kcca;
};

/// Full forward pass of one document. rng enables encoder dropout.
ForwardPass forward(Graph& g, const Model& model, const std::vector<Chunk>& chunks,
                    std::mt19937_64* rng = nullptr);

/// Eval-mode probabilities of one text.
Vector predict_scores(const Model& model, const std::string& text);

}  // namespace kgc
