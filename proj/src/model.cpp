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

#include "kgc/model.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "kgc/error.hpp"

namespace kgc {

HeadParams HeadParams::init(int filters, int kernel, double leaky_slope, std::mt19937_64& rng) {
  if (filters < 1) throw ConfigError("conv_filters must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("conv_kernel must be odd and positive");
  auto uniform = [&rng](Eigen::Index r, Eigen::Index c, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = dist(rng);
    return m;
  };
  HeadParams h;
  h.kernel = kernel;
  h.leaky_slope = leaky_slope;
  h.conv1_w = Param("head.conv1_w", uniform(filters, 3 * kernel, 3 * kernel));
  h.conv1_b = Param("head.conv1_b", Matrix::Zero(filters, 1));
  h.conv2_w = Param("head.conv2_w", uniform(1, filters, filters));
  h.conv2_b = Param("head.conv2_b", Matrix::Zero(1, 1));
  return h;
}

Var fuse(Graph& g, const std::array<Var, 3>& reps, const BranchSwitches& switches,
         Eigen::Index n_labels, Eigen::Index d) {
  if (!switches.any()) throw ConfigError("at least one of lsa, lcca, kcca must be enabled");
  const bool on[3] = {switches.lsa, switches.lcca, switches.kcca};
  std::array<Var, 3> parts;
  for (int c = 0; c < 3; ++c) {
    if (!on[c]) {
      parts[static_cast<std::size_t>(c)] = g.constant(Matrix::Zero(n_labels, d));
      continue;
    }
    const Var r = reps[static_cast<std::size_t>(c)];
    if (!r.valid() || r.rows() != n_labels || r.cols() != d)
      throw ShapeError("fuse: branch " + std::to_string(c) + " has the wrong shape");
    parts[static_cast<std::size_t>(c)] = r;
  }
  return ag::concat_cols(parts);
}

Var forward_head(Var fused, const HeadParams& head, Eigen::Index d) {
  Graph& g = *fused.graph;
  Var h = ag::conv1d_same(fused, g.param(head.conv1_w), g.param(head.conv1_b), d);
  h = ag::leaky_relu(h, head.leaky_slope);
  h = ag::conv1d_same(h, g.param(head.conv2_w), g.param(head.conv2_b), d);
  return ag::sigmoid(ag::mean_cols(h));
}

Var bce_loss(Var probs, std::span<const double> targets) { return ag::bce_mean(probs, targets); }

void ModelConfig::validate() const {
  encoder.validate();
  chunking.validate();
  if (chunking.chunk_size > encoder.max_position)
    throw ConfigError("chunk_size exceeds the encoder's position table");
  if (n_labels < 1) throw ConfigError("label space is empty");
  if (d_a < 1) throw ConfigError("d_a must be >= 1");
  if (m < 1) throw ConfigError("m must be >= 1");
  if (!switches.any()) throw ConfigError("at least one of lsa, lcca, kcca must be enabled");
}

Json ModelConfig::to_json() const {
  return Json{{"encoder", encoder.to_json()},
              {"chunk_size", chunking.chunk_size},
              {"max_length", chunking.max_length},
              {"stride", chunking.stride},
              {"n_labels", n_labels},
              {"d_a", d_a},
              {"m", m},
              {"conv_filters", conv_filters},
              {"conv_kernel", conv_kernel},
              {"leaky_slope", leaky_slope},
              {"lsa", switches.lsa},
              {"lcca", switches.lcca},
              {"kcca", switches.kcca},
              {"kcca_literal", kcca_literal},
              {"unfreeze_labels", unfreeze_labels}};
}

ModelConfig ModelConfig::from_json(const Json& j) {
  ModelConfig c;
  c.encoder = EncoderConfig::from_json(j.at("encoder"));
  c.chunking.chunk_size = j.at("chunk_size").get<int>();
  c.chunking.max_length = j.at("max_length").get<int>();
  c.chunking.stride = j.at("stride").get<int>();
  c.n_labels = j.at("n_labels").get<int>();
  c.d_a = j.at("d_a").get<int>();
  c.m = j.at("m").get<int>();
  c.conv_filters = j.at("conv_filters").get<int>();
  c.conv_kernel = j.at("conv_kernel").get<int>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.switches.lsa = j.at("lsa").get<bool>();
  c.switches.lcca = j.at("lcca").get<bool>();
  c.switches.kcca = j.at("kcca").get<bool>();
  c.kcca_literal = j.at("kcca_literal").get<bool>();
  c.unfreeze_labels = j.at("unfreeze_labels").get<bool>();
  c.validate();
  return c;
}

Model::Model(ModelConfig cfg, Vocab vocab, LabelSpace labels, TransformerEncoder encoder,
             const Matrix& label_matrix, const Matrix& k_best, const Matrix& k_avg,
             std::uint64_t seed)
    : cfg_(std::move(cfg)),
      vocab_(std::move(vocab)),
      labels_(std::move(labels)),
      encoder_(std::move(encoder)) {
  cfg_.validate();
  const int d = cfg_.encoder.d;
  const auto n = static_cast<Eigen::Index>(cfg_.n_labels);
  if (static_cast<int>(labels_.size()) != cfg_.n_labels)
    throw ShapeError("label space size differs from n_labels");
  if (static_cast<int>(vocab_.size()) != cfg_.encoder.vocab_size)
    throw ShapeError("vocab size differs from the encoder's embedding table");
  if (label_matrix.rows() != n || label_matrix.cols() != d)
    throw ShapeError("label matrix must be (L_n, d)");
  if (k_best.rows() != n * cfg_.m || k_best.cols() != d)
    throw ShapeError("K_best must be (L_n * M, d)");
  if (k_avg.rows() != n || k_avg.cols() != d) throw ShapeError("K_avg must be (L_n, d)");

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  attn_ = AttentionParams::init(d, cfg_.d_a, cfg_.n_labels, rng);
  head_ = HeadParams::init(cfg_.conv_filters, cfg_.conv_kernel, cfg_.leaky_slope, rng);
  if (cfg_.d_a == d) {
    // Label-wise rows start at the label embeddings, so each label first
    // attends to tokens resembling its description.
    attn_.w1.value = Matrix::Identity(d, d) + 0.1 * attn_.w1.value;
    attn_.w2.value = label_matrix * 2.0 / std::sqrt(static_cast<double>(d));
  }
  label_matrix_ = Param("labels", label_matrix, cfg_.unfreeze_labels);
  k_best_ = Param("knowledge.k_best", k_best, false);
  k_avg_ = Param("knowledge.k_avg", k_avg, false);
}

std::vector<Chunk> Model::chunk_text(const std::string& text, const std::string& doc_id) const {
  const auto ids = tokenize(text, vocab_);
  return chunk(ids, cfg_.chunking, doc_id);
}

std::vector<const Param*> Model::params() const {
  std::vector<const Param*> out = encoder_.params();
  for (auto* p : attn_.params()) out.push_back(p);
  for (auto* p : head_.params()) out.push_back(p);
  out.push_back(&label_matrix_);
  out.push_back(&k_best_);
  out.push_back(&k_avg_);
  return out;
}

std::vector<Param*> Model::params() {
  std::vector<Param*> out;
  for (const Param* p : std::as_const(*this).params()) out.push_back(const_cast<Param*>(p));
  return out;
}

std::vector<Param*> Model::trainable_params() {
  std::vector<const Param*> off;
  if (!cfg_.switches.lsa)
    for (auto* p : attn_.lsa_params()) off.push_back(p);
  if (!cfg_.switches.lcca)
    for (auto* p : attn_.lcca_params()) off.push_back(p);
  if (!cfg_.switches.kcca)
    for (auto* p : attn_.kcca_params()) off.push_back(p);
  std::vector<Param*> out;
  for (Param* p : params()) {
    if (!p->trainable) continue;
    if (std::find(off.begin(), off.end(), p) != off.end()) continue;
    out.push_back(p);
  }
  return out;
}

Json Model::to_json() const {
  Json labels = Json::array();
  for (std::size_t i = 0; i < labels_.size(); ++i)
    labels.push_back(Json{{"code", labels_.code(i)}, {"description", labels_.description(i)}});
  std::vector<const Param*> rest;
  for (auto* p : attn_.params()) rest.push_back(p);
  for (auto* p : head_.params()) rest.push_back(p);
  rest.push_back(&label_matrix_);
  rest.push_back(&k_best_);
  rest.push_back(&k_avg_);
  return Json{{"config", cfg_.to_json()},
              {"label_space", std::move(labels)},
              {"label_space_hash", labels_.hash()},
              {"encoder", encoder_to_json(encoder_, vocab_)},
              {"tensors", params_to_json(rest)}};
}

Model Model::from_json(const Json& j) {
  ModelConfig cfg = ModelConfig::from_json(j.at("config"));
  Vocab vocab;
  TransformerEncoder enc = encoder_from_json(j.at("encoder"), &vocab);
  LabelSpace labels;
  for (const auto& l : j.at("label_space"))
    labels.add(l.at("code").get<std::string>(), l.at("description").get<std::string>());
  if (labels.hash() != j.at("label_space_hash").get<std::string>())
    throw ValidationError("checkpoint label space is corrupt");
  const int d = cfg.encoder.d;
  const auto n = static_cast<Eigen::Index>(cfg.n_labels);
  Model model(cfg, std::move(vocab), std::move(labels), std::move(enc), Matrix::Zero(n, d),
              Matrix::Zero(n * cfg.m, d), Matrix::Zero(n, d), 0);
  std::vector<Param*> rest;
  for (auto* p : std::as_const(model.attn_).params()) rest.push_back(const_cast<Param*>(p));
  for (auto* p : std::as_const(model.head_).params()) rest.push_back(const_cast<Param*>(p));
  rest.push_back(&model.label_matrix_);
  rest.push_back(&model.k_best_);
  rest.push_back(&model.k_avg_);
  params_from_json(j.at("tensors"), rest);
  return model;
}

ForwardPass forward(Graph& g, const Model& model, const std::vector<Chunk>& chunks,
                    std::mt19937_64* rng) {
  const ModelConfig& cfg = model.config();
  const auto d = static_cast<Eigen::Index>(cfg.encoder.d);
  ChunkStates states;
  for (const Chunk& c : chunks) {
    states.masks.push_back(c.mask);
    if (c.real_tokens() == 0) {
      // Padding-only windows are never attended; their states stay zero.
      states.h.push_back(g.constant(Matrix::Zero(static_cast<Eigen::Index>(c.token_ids.size()), d)));
      continue;
    }
    states.h.push_back(model.encoder().encode(g, c.token_ids, c.mask, rng));
  }
  if (!states.has_content()) throw ValidationError("attention: no attendable content in document");

  ForwardPass out;
  std::array<Var, 3> reps;
  if (cfg.switches.lsa) {
    out.lsa = lsa(states, model.attention());
    reps[0] = out.lsa->rep;
  }
  if (cfg.switches.lcca) {
    out.lcca = lcca(g.param(model.label_matrix()), states, model.attention());
    reps[1] = out.lcca->rep;
  }
  if (cfg.switches.kcca) {
    out.kcca = kcca(g.param(model.k_best()), g.param(model.k_avg()), cfg.m, states,
                    model.attention(), cfg.kcca_literal);
    reps[2] = out.kcca->rep;
  }
  Var fused = fuse(g, reps, cfg.switches, cfg.n_labels, d);
  out.probs = forward_head(fused, model.head(), d);
  return out;
}

Vector predict_scores(const Model& model, const std::string& text) {
  Graph g(false);
  const ForwardPass fp = forward(g, model, model.chunk_text(text));
  return fp.probs.value().col(0);
}

}  // namespace kgc
