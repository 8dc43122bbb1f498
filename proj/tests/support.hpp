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

// Shared helpers for the test binaries: finite-difference gradient checks,
// temporary directories and the in-process smoke pipeline.

#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "kgc/autograd.hpp"
#include "kgc/diversity.hpp"
#include "kgc/knowledge.hpp"
#include "kgc/synthetic.hpp"
#include "kgc/train.hpp"

namespace kgc::testing {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("kgc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

struct GradCheck {
  std::string name;
  double rel_error = 0.0;
};

/// Compares analytic gradients with central differences for every param.
/// `loss` builds the scalar on a fresh recording graph.
inline std::vector<GradCheck> check_gradients(const std::vector<Param*>& params,
                                              const std::function<Var(Graph&)>& loss,
                                              double step = 1e-5) {
  for (Param* p : params) p->zero_grad();
  {
    Graph g(true);
    g.backward(loss(g));
  }
  std::vector<GradCheck> out;
  for (Param* p : params) {
    Matrix numeric(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double orig = p->value.data()[i];
      p->value.data()[i] = orig + step;
      Graph gp(false);
      const double fp = loss(gp).value()(0, 0);
      p->value.data()[i] = orig - step;
      Graph gm(false);
      const double fm = loss(gm).value()(0, 0);
      p->value.data()[i] = orig;
      numeric.data()[i] = (fp - fm) / (2.0 * step);
    }
    const double denom = std::max(p->grad.norm(), numeric.norm());
    const double rel = denom == 0.0 ? 0.0 : (p->grad - numeric).norm() / denom;
    out.push_back({p->name, rel});
  }
  return out;
}

/// Smoke configuration shared by the training, ablation and trace tests.
inline TrainConfig smoke_config() {
  TrainConfig c;
  c.seed = 7;
  c.m = 4;
  c.d = 64;
  c.layers = 1;
  c.heads = 2;
  c.ff = 128;
  c.chunk_size = 96;
  c.max_length = 192;
  c.epochs = 60;
  c.batch_size = 4;
  c.lr = 3e-3;
  c.warmup_steps = 20;
  c.patience = 60;
  c.conv_filters = 16;
  c.dropout = 0.3;
  return c;
}

struct SmokeRun {
  SyntheticData data;
  SplitCorpora splits;
  KnowledgeBase kb;
  KnowledgeMatrix km;
  EncoderSnapshot snapshot;
  Model model;  // untrained
  TrainResult result;
};

/// Synthetic data through knowledge building, diverse selection and model
/// assembly, all in process. Nothing is trained yet.
inline SmokeRun prepare_run(const TrainConfig& cfg, const SyntheticConfig& sc,
                            const std::string& tag) {
  SmokeRun run;
  run.data = generate_synthetic(sc);
  const auto dir = temp_dir(tag);
  write_synthetic(run.data, dir);
  const LabelSpace& labels = run.data.corpus.labels;
  run.splits = split(run.data.corpus, run.data.splits);

  std::map<Source, std::vector<KnowledgeEntry>> inputs;
  inputs[Source::kUmls] = load_umls_synonyms(dir / "synonyms.jsonl", labels).entries;
  for (const auto& e : load_knowledge_entries(dir / "knowledge.jsonl")) inputs[e.source].push_back(e);
  run.kb = build_kb(labels, cfg.source_set(), inputs);

  run.snapshot = initial_encoder(cfg, run.splits.train);
  const TransformerSentenceEncoder se(run.snapshot.encoder, run.snapshot.vocab);
  run.km = build_knowledge_matrix(run.kb, se, cfg.m, cfg.source_set(), cfg.exact_cap);
  run.model = build_model(cfg, run.snapshot, labels, run.km);
  return run;
}

inline SyntheticConfig smoke_data() {
  SyntheticConfig sc;
  sc.n_docs = 64;
  sc.n_labels = 20;
  sc.vocab_size = 500;
  sc.seed = 7;
  return sc;
}

/// The smoke corpus (64 docs, 20 labels, 500 words, seed 7), trained.
inline SmokeRun run_smoke(const TrainConfig& cfg, const std::string& tag = "smoke",
                          const std::function<void(const EpochLog&)>& on_epoch = {}) {
  SmokeRun run = prepare_run(cfg, smoke_data(), tag);
  run.result = train(cfg, run.model, run.splits.train, run.splits.dev, on_epoch);
  return run;
}

/// A small model for gradient checks: d=16, T=8, two chunks, five labels,
/// M=2 and four conv filters. Every parameter is drawn from `seed`.
struct TinyModel {
  Model model;
  std::vector<Chunk> chunks;
  std::vector<double> targets;
};

inline TinyModel tiny_model(std::uint64_t seed = 11) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.d = 16;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ff = 16;
  cfg.chunk_size = 8;
  cfg.max_length = 16;
  cfg.m = 2;
  cfg.conv_filters = 4;
  std::vector<std::string> words{"<pad>", "<unk>", "<cls>"};
  for (int i = 0; i < 12; ++i) words.push_back("w" + std::to_string(i));
  Vocab vocab = Vocab::from_tokens(words);
  LabelSpace labels;
  for (int l = 0; l < 5; ++l) labels.add("C" + std::to_string(l), "w" + std::to_string(l));
  const ModelConfig mc = cfg.model_config(static_cast<int>(labels.size()), static_cast<int>(vocab.size()));
  std::mt19937_64 rng(seed);
  TransformerEncoder enc(mc.encoder);
  for (Param* p : enc.params())
    p->value += random_matrix(p->value.rows(), p->value.cols(), rng, -0.1, 0.1);
  const Matrix lm = random_matrix(5, 16, rng);
  const Matrix kb = random_matrix(10, 16, rng);
  Matrix kavg(5, 16);
  for (int l = 0; l < 5; ++l) kavg.row(l) = kb.middleRows(2 * l, 2).colwise().mean();
  TinyModel t{Model(mc, vocab, labels, enc, lm, kb, kavg, seed), {}, {1, 0, 0, 1, 0}};
  t.chunks = t.model.chunk_text("w0 w3 w5 w7 w1 w9 w2 w11 w4 w3 w8 w6");
  return t;
}

/// Mean BCE of one forward pass of the tiny model.
inline Var tiny_loss(Graph& g, const TinyModel& t) {
  return bce_loss(forward(g, t.model, t.chunks).probs, t.targets);
}

}  // namespace kgc::testing
