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

#include "kgc/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include <spdlog/spdlog.h>

#include "kgc/error.hpp"
#include "kgc/metrics.hpp"

namespace kgc {

namespace fs = std::filesystem;

std::vector<double> default_threshold_grid() {
  std::vector<double> g;
  for (int k = 5; k <= 95; ++k) g.push_back(k / 100.0);
  return g;
}

namespace {

using Setter = std::function<void(TrainConfig&, const Json&)>;

template <typename T>
Setter field(T TrainConfig::*member) {
  return [member](TrainConfig& c, const Json& v) { c.*member = v.get<T>(); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"max_length", field(&TrainConfig::max_length)},
      {"chunk_size", field(&TrainConfig::chunk_size)},
      {"stride", field(&TrainConfig::stride)},
      {"epochs", field(&TrainConfig::epochs)},
      {"batch_size", field(&TrainConfig::batch_size)},
      {"m", field(&TrainConfig::m)},
      {"lr", field(&TrainConfig::lr)},
      {"warmup_steps", field(&TrainConfig::warmup_steps)},
      {"patience", field(&TrainConfig::patience)},
      {"seed", field(&TrainConfig::seed)},
      {"sources", field(&TrainConfig::sources)},
      {"lsa", field(&TrainConfig::lsa)},
      {"lcca", field(&TrainConfig::lcca)},
      {"kcca", field(&TrainConfig::kcca)},
      {"threshold_grid", field(&TrainConfig::threshold_grid)},
      {"per_label_threshold", field(&TrainConfig::per_label_threshold)},
      {"d", field(&TrainConfig::d)},
      {"layers", field(&TrainConfig::layers)},
      {"heads", field(&TrainConfig::heads)},
      {"ff", field(&TrainConfig::ff)},
      {"d_a", field(&TrainConfig::d_a)},
      {"dropout", field(&TrainConfig::dropout)},
      {"conv_filters", field(&TrainConfig::conv_filters)},
      {"conv_kernel", field(&TrainConfig::conv_kernel)},
      {"leaky_slope", field(&TrainConfig::leaky_slope)},
      {"min_freq", field(&TrainConfig::min_freq)},
      {"kcca_literal", field(&TrainConfig::kcca_literal)},
      {"unfreeze_labels", field(&TrainConfig::unfreeze_labels)},
      {"exact_cap", field(&TrainConfig::exact_cap)},
  };
  return table;
}

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
  };
  positive(max_length, "max_length");
  positive(chunk_size, "chunk_size");
  positive(epochs, "epochs");
  positive(batch_size, "batch_size");
  positive(m, "m");
  positive(patience, "patience");
  positive(min_freq, "min_freq");
  positive(exact_cap, "exact_cap");
  if (stride < 0) throw ConfigError("stride must be >= 0");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (!lsa && !lcca && !kcca) throw ConfigError("at least one of lsa, lcca, kcca must be enabled");
  if (threshold_grid.empty()) throw ConfigError("threshold_grid must not be empty");
  for (double t : threshold_grid)
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("threshold_grid values must lie in (0, 1)");
  if (d_a < 0) throw ConfigError("d_a must be >= 0");
  source_set();
  model_config(1, 3).validate();
}

Json TrainConfig::to_json() const {
  return Json{{"max_length", max_length},
              {"chunk_size", chunk_size},
              {"stride", stride},
              {"epochs", epochs},
              {"batch_size", batch_size},
              {"m", m},
              {"lr", lr},
              {"warmup_steps", warmup_steps},
              {"patience", patience},
              {"seed", seed},
              {"sources", sources},
              {"lsa", lsa},
              {"lcca", lcca},
              {"kcca", kcca},
              {"threshold_grid", threshold_grid},
              {"per_label_threshold", per_label_threshold},
              {"d", d},
              {"layers", layers},
              {"heads", heads},
              {"ff", ff},
              {"d_a", d_a},
              {"dropout", dropout},
              {"conv_filters", conv_filters},
              {"conv_kernel", conv_kernel},
              {"leaky_slope", leaky_slope},
              {"min_freq", min_freq},
              {"kcca_literal", kcca_literal},
              {"unfreeze_labels", unfreeze_labels},
              {"exact_cap", exact_cap}};
}

TrainConfig TrainConfig::from_json(const Json& j, const TrainConfig& base) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c = base;
  for (const auto& [key, value] : j.items()) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key \"" + key + "\"");
    try {
      it->second(c, value);
    } catch (const Json::exception& e) {
      throw ConfigError("config key \"" + key + "\" has an invalid value: " + e.what());
    }
  }
  return c;
}

TrainConfig TrainConfig::from_json(const Json& j) { return from_json(j, TrainConfig{}); }

void TrainConfig::set(const std::string& key, const std::string& value) {
  Json v;
  try {
    v = Json::parse(value);
  } catch (const Json::parse_error&) {
    v = value;
  }
  if (key == "sources" && !v.is_string()) v = value;
  *this = from_json(Json{{key, v}}, *this);
}

std::string TrainConfig::hash() const { return hash_hex(to_json().dump()); }

SourceSet TrainConfig::source_set() const { return parse_sources(sources); }

EncoderConfig TrainConfig::encoder_config(int vocab_size) const {
  EncoderConfig e;
  e.vocab_size = vocab_size;
  e.d = d;
  e.layers = layers;
  e.heads = heads;
  e.ff = ff;
  e.max_position = chunk_size;
  e.dropout = dropout;
  e.seed = seed;
  return e;
}

ChunkingConfig TrainConfig::chunking() const {
  ChunkingConfig c;
  c.chunk_size = chunk_size;
  c.max_length = max_length;
  c.stride = stride;
  return c;
}

ModelConfig TrainConfig::model_config(int n_labels, int vocab_size) const {
  ModelConfig mc;
  mc.encoder = encoder_config(vocab_size);
  mc.chunking = chunking();
  mc.n_labels = n_labels;
  mc.d_a = d_a > 0 ? d_a : d;
  mc.m = m;
  mc.conv_filters = conv_filters;
  mc.conv_kernel = conv_kernel;
  mc.leaky_slope = leaky_slope;
  mc.switches = {lsa, lcca, kcca};
  mc.kcca_literal = kcca_literal;
  mc.unfreeze_labels = unfreeze_labels;
  return mc;
}

TrainConfig load_train_config(const fs::path& path, const TrainConfig& base) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return TrainConfig::from_json(j, base);
}

std::string EncoderSnapshot::sentence_encoder_id() const {
  return TransformerSentenceEncoder(encoder, vocab).id();
}

EncoderSnapshot initial_encoder(const TrainConfig& cfg, const Corpus& train) {
  EncoderSnapshot s;
  s.vocab = build_vocab(train, cfg.min_freq);
  s.encoder = TransformerEncoder(cfg.encoder_config(static_cast<int>(s.vocab.size())));
  return s;
}

Model build_model(const TrainConfig& cfg, const EncoderSnapshot& snap, const LabelSpace& labels,
                  const KnowledgeMatrix& km) {
  const std::string expected =
      knowledge_config_hash(cfg.m, cfg.source_set(), snap.sentence_encoder_id());
  if (km.config_hash != expected)
    throw ConfigError("knowledge matrix hash " + km.config_hash + " does not match " + expected +
                      " (rebuild it with the same seed, M, sources and training split)");
  if (km.m != cfg.m || km.dim != cfg.d) throw ConfigError("knowledge matrix shape mismatch");

  const int d = cfg.d;
  const auto n = static_cast<Eigen::Index>(labels.size());
  Matrix k_best(n * cfg.m, d);
  Matrix k_avg(n, d);
  for (Eigen::Index l = 0; l < n; ++l) {
    const CodeKnowledge& ck = km.at(labels.code(static_cast<std::size_t>(l)));
    k_best.middleRows(l * cfg.m, cfg.m) = ck.rows;
    k_avg.row(l) = ck.avg.transpose();
  }
  const TransformerSentenceEncoder se(snap.encoder, snap.vocab);
  const Matrix label_matrix = encode_labels(labels, se);
  return Model(cfg.model_config(static_cast<int>(labels.size()),
                                static_cast<int>(snap.vocab.size())),
               snap.vocab, labels, snap.encoder, label_matrix, k_best, k_avg, cfg.seed);
}

Adam::Adam(std::vector<Param*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const Param* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -=
        lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.eps);
    p.zero_grad();
  }
}

double scheduled_lr(double peak, long step, long warmup, long total) {
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  const long span = std::max(1L, total - warmup);
  return peak * std::max(0.0, static_cast<double>(total - step) / static_cast<double>(span));
}

void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

namespace {

Matrix score_chunks(const Model& model, const std::vector<std::vector<Chunk>>& docs) {
  Matrix s(static_cast<Eigen::Index>(docs.size()), model.config().n_labels);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    Graph g(false);
    s.row(static_cast<Eigen::Index>(i)) = forward(g, model, docs[i]).probs.value().col(0).transpose();
  }
  return s;
}

std::vector<std::vector<Chunk>> chunk_corpus(const Model& model, const Corpus& c) {
  std::vector<std::vector<Chunk>> out;
  out.reserve(c.docs.size());
  for (const auto& d : c.docs) out.push_back(model.chunk_text(d.text, d.id));
  return out;
}

double micro_f1_at(const Matrix& scores, const Matrix& gold, double t) {
  EvalBatch b;
  b.scores = scores;
  b.gold = gold;
  b.threshold = t;
  return micro_f1(b);
}

}  // namespace

Matrix score_corpus(const Model& model, const Corpus& corpus) {
  return score_chunks(model, chunk_corpus(model, corpus));
}

double optimize_threshold(const Matrix& scores, const Matrix& gold, std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("threshold grid is empty");
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());
  double best_t = sorted.front();
  double best_f = -1.0;
  for (double t : sorted) {
    const double f = micro_f1_at(scores, gold, t);
    if (f > best_f) {
      best_f = f;
      best_t = t;
    }
  }
  return best_t;
}

std::vector<double> optimize_label_thresholds(const Matrix& scores, const Matrix& gold,
                                              std::span<const double> grid) {
  std::vector<double> out;
  for (Eigen::Index l = 0; l < scores.cols(); ++l)
    out.push_back(optimize_threshold(scores.col(l), gold.col(l), grid));
  return out;
}

Json EpochLog::to_json(bool with_time) const {
  Json j{{"epoch", epoch},
         {"train_loss", train_loss},
         {"dev_micro_f1", dev_micro_f1 ? Json(*dev_micro_f1) : Json(nullptr)},
         {"lr", lr}};
  if (with_time) j["wall_time"] = wall_time;
  return j;
}

TrainResult train(const TrainConfig& cfg, Model model, const Corpus& train_set,
                  const Corpus& dev_set, const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ValidationError("training split is empty");
  const LabelSpace& labels = model.labels();
  const auto train_docs = chunk_corpus(model, train_set);
  const auto dev_docs = chunk_corpus(model, dev_set);
  const Matrix train_gold = gold_matrix(train_set, labels);
  const Matrix dev_gold = gold_matrix(dev_set, labels);
  const bool has_dev = !dev_set.empty();
  if (!has_dev) spdlog::warn("dev split is empty: early stopping disabled, last epoch kept");

  std::mt19937_64 rng(cfg.seed + 1);
  Adam opt(model.trainable_params());
  for (Param* p : model.params()) p->zero_grad();

  const std::size_t n = train_docs.size();
  const long per_epoch = static_cast<long>((n + cfg.batch_size - 1) / cfg.batch_size);
  const long total = per_epoch * cfg.epochs;
  long step = 0;
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult result;
  result.model = model;
  double best = -1.0;
  int bad_epochs = 0;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_indices(order, rng);
    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      const double inv_b = 1.0 / static_cast<double>(end - start);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        Graph g(true);
        ForwardPass fp = forward(g, model, train_docs[i], cfg.dropout > 0.0 ? &rng : nullptr);
        const Vector gold = train_gold.row(static_cast<Eigen::Index>(i)).transpose();
        Var loss = bce_loss(fp.probs, std::span<const double>(gold.data(), gold.size()));
        batch_loss += loss.value()(0, 0);
        g.backward(ag::scale(loss, inv_b));
      }
      if (!std::isfinite(batch_loss)) {
        std::string ids;
        for (std::size_t k = start; k < end; ++k)
          ids += (ids.empty() ? "" : ", ") + train_set.docs[order[k]].id;
        throw Error("training diverged at epoch " + std::to_string(epoch) + " step " +
                    std::to_string(step) + ": non-finite loss on batch [" + ids + "]");
      }
      lr = scheduled_lr(cfg.lr, step, cfg.warmup_steps, total);
      opt.step(lr);
      ++step;
      loss_sum += batch_loss;
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(n);
    log.lr = lr;
    if (has_dev) log.dev_micro_f1 = micro_f1_at(score_chunks(model, dev_docs), dev_gold, 0.5);
    log.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    if (!has_dev) {
      result.model = model;
      result.best_epoch = epoch;
      continue;
    }
    if (*log.dev_micro_f1 > best) {
      best = *log.dev_micro_f1;
      result.model = model;
      result.best_epoch = epoch;
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      break;
    }
  }

  if (has_dev) {
    const Matrix dev_scores = score_chunks(result.model, dev_docs);
    result.threshold = optimize_threshold(dev_scores, dev_gold, cfg.threshold_grid);
    if (cfg.per_label_threshold)
      result.label_thresholds = optimize_label_thresholds(dev_scores, dev_gold, cfg.threshold_grid);
  }
  return result;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  Json j{{"format", "kgc.model"},
         {"version", 1},
         {"train_config", ckpt.config.to_json()},
         {"config_hash", ckpt.config_hash},
         {"knowledge_hash", ckpt.knowledge_hash},
         {"threshold", ckpt.threshold},
         {"label_thresholds", ckpt.label_thresholds},
         {"best_epoch", ckpt.best_epoch},
         {"model", ckpt.model.to_json()}};
  write_file_atomic(path, j.dump());
}

Checkpoint load_checkpoint(const fs::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "kgc.model")
    throw ValidationError(path.string() + ": not a model checkpoint");
  if (j.value("version", 0) != 1)
    throw ValidationError(path.string() + ": unsupported checkpoint version");
  Checkpoint c;
  c.config = TrainConfig::from_json(j.at("train_config"));
  c.config_hash = j.at("config_hash").get<std::string>();
  c.knowledge_hash = j.at("knowledge_hash").get<std::string>();
  c.threshold = j.at("threshold").get<double>();
  c.label_thresholds = j.at("label_thresholds").get<std::vector<double>>();
  c.best_epoch = j.at("best_epoch").get<int>();
  c.model = Model::from_json(j.at("model"));
  return c;
}

}  // namespace kgc
