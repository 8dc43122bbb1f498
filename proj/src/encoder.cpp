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

#include "kgc/encoder.hpp"

#include <cmath>
#include <cstring>
#include <map>

#include "kgc/error.hpp"

namespace kgc {

namespace fs = std::filesystem;

void EncoderConfig::validate() const {
  if (vocab_size < 3) throw ConfigError("encoder vocab_size must cover the special tokens");
  if (d <= 0 || layers < 0 || heads <= 0 || ff <= 0 || max_position <= 0)
    throw ConfigError("encoder dimensions must be positive");
  if (d % heads != 0)
    throw ConfigError("encoder d (" + std::to_string(d) + ") must be divisible by heads (" +
                      std::to_string(heads) + ")");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

Json EncoderConfig::to_json() const {
  return Json{{"vocab_size", vocab_size}, {"d", d},   {"layers", layers},
              {"heads", heads},           {"ff", ff}, {"max_position", max_position},
              {"dropout", dropout},       {"seed", seed}};
}

EncoderConfig EncoderConfig::from_json(const Json& j) {
  EncoderConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.d = j.at("d").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ff = j.at("ff").get<int>();
  c.max_position = j.at("max_position").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

Json params_to_json(std::span<const Param* const> params) {
  Json out = Json::object();
  for (const Param* p : params) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(p->value.size()));
    for (Eigen::Index r = 0; r < p->value.rows(); ++r)
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) data.push_back(p->value(r, c));
    out[p->name] = Json{{"rows", p->value.rows()}, {"cols", p->value.cols()}, {"data", data}};
  }
  return out;
}

void params_from_json(const Json& j, std::span<Param* const> params) {
  for (Param* p : params) {
    if (!j.contains(p->name)) throw ValidationError("checkpoint lacks tensor " + p->name);
    const auto& t = j.at(p->name);
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    if (rows != p->value.rows() || cols != p->value.cols())
      throw ValidationError("checkpoint tensor " + p->name + " has shape " +
                            std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                            std::to_string(p->value.rows()) + "x" +
                            std::to_string(p->value.cols()));
    const auto& data = t.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
      throw ValidationError("checkpoint tensor " + p->name + " has wrong element count");
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) p->value(r, c) = data[k++].get<double>();
    p->zero_grad();
  }
}

std::string params_digest(std::span<const Param* const> params) {
  std::uint64_t h = fnv1a64("");
  for (const Param* p : params) {
    h = fnv1a64(p->name, h);
    const Eigen::Index shape[2] = {p->value.rows(), p->value.cols()};
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(shape), sizeof(shape)), h);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(p->value.data()),
                                 static_cast<std::size_t>(p->value.size()) * sizeof(double)),
                h);
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

Matrix randn(Eigen::Index r, Eigen::Index c, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = dist(rng);
  return m;
}

Var dropout(Var x, double p, std::mt19937_64* rng) {
  if (rng == nullptr || p <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? 1.0 / (1.0 - p) : 0.0;
  return ag::mask_mul(x, std::move(mask));
}

}  // namespace

TransformerEncoder::TransformerEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  const int d = cfg_.d;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double sff = 1.0 / std::sqrt(static_cast<double>(cfg_.ff));
  tok_emb_ = Param("enc.tok_emb", randn(cfg_.vocab_size, d, 1.0, rng));
  // A zero [cls] row makes the pooled state a function of the text alone.
  tok_emb_.value.row(Vocab::kPad).setZero();
  tok_emb_.value.row(Vocab::kCls).setZero();
  pos_emb_ = Param("enc.pos_emb", Matrix::Zero(cfg_.max_position, d));
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "enc.layer" + std::to_string(l) + ".";
    Layer L;
    L.ln1_g = Param(p + "ln1_g", Matrix::Ones(1, d));
    L.ln1_b = Param(p + "ln1_b", Matrix::Zero(1, d));
    L.wq = Param(p + "wq", randn(d, d, sd, rng));
    L.bq = Param(p + "bq", Matrix::Zero(1, d));
    L.wk = Param(p + "wk", randn(d, d, sd, rng));
    L.wv = Param(p + "wv", Matrix::Identity(d, d) + randn(d, d, 0.1 * sd, rng));
    L.bv = Param(p + "bv", Matrix::Zero(1, d));
    L.wo = Param(p + "wo", Matrix::Identity(d, d) + randn(d, d, 0.1 * sd, rng));
    L.bo = Param(p + "bo", Matrix::Zero(1, d));
    L.ln2_g = Param(p + "ln2_g", Matrix::Ones(1, d));
    L.ln2_b = Param(p + "ln2_b", Matrix::Zero(1, d));
    L.w1 = Param(p + "w1", randn(d, cfg_.ff, sd, rng));
    L.b1 = Param(p + "b1", Matrix::Zero(1, cfg_.ff));
    L.w2 = Param(p + "w2", randn(cfg_.ff, d, 0.1 * sff, rng));
    L.b2 = Param(p + "b2", Matrix::Zero(1, d));
    layers_.push_back(std::move(L));
  }
  lnf_g_ = Param("enc.lnf_g", Matrix::Ones(1, d));
  lnf_b_ = Param("enc.lnf_b", Matrix::Zero(1, d));
}

Var TransformerEncoder::encode(Graph& g, std::span<const int> ids,
                               std::span<const std::uint8_t> mask, std::mt19937_64* rng) const {
  const auto n = static_cast<Eigen::Index>(ids.size());
  if (mask.size() != ids.size()) throw ShapeError("encode: ids/mask length mismatch");
  if (n > cfg_.max_position)
    throw ShapeError("encode: sequence of " + std::to_string(n) + " exceeds max position " +
                     std::to_string(cfg_.max_position));
  for (int id : ids)
    if (id < 0 || id >= cfg_.vocab_size)
      throw ValidationError("token id " + std::to_string(id) + " out of range for vocab of " +
                            std::to_string(cfg_.vocab_size));
  const double p = cfg_.dropout;
  const int heads = cfg_.heads;
  const Eigen::Index dh = cfg_.d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Var tok = ag::embedding(g, tok_emb_, ids);
  Var pos = ag::slice_rows(g.param(pos_emb_), 0, n);
  Var x = dropout(ag::add(tok, pos), p, rng);

  for (const Layer& L : layers_) {
    Var h = ag::layer_norm(x, g.param(L.ln1_g), g.param(L.ln1_b));
    Var q = ag::add_row(ag::matmul(h, g.param(L.wq)), g.param(L.bq));
    Var k = ag::matmul(h, g.param(L.wk));
    Var v = ag::add_row(ag::matmul(h, g.param(L.wv)), g.param(L.bv));
    std::vector<Var> outs;
    for (int hd = 0; hd < heads; ++hd) {
      Var qh = ag::slice_cols(q, hd * dh, dh);
      Var kh = ag::slice_cols(k, hd * dh, dh);
      Var vh = ag::slice_cols(v, hd * dh, dh);
      Var att = ag::masked_softmax(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt), mask);
      outs.push_back(ag::matmul(att, vh));
    }
    Var o = heads == 1 ? outs.front() : ag::concat_cols(outs);
    o = ag::add_row(ag::matmul(o, g.param(L.wo)), g.param(L.bo));
    x = ag::add(x, dropout(o, p, rng));

    Var h2 = ag::layer_norm(x, g.param(L.ln2_g), g.param(L.ln2_b));
    Var f = ag::gelu(ag::add_row(ag::matmul(h2, g.param(L.w1)), g.param(L.b1)));
    f = ag::add_row(ag::matmul(f, g.param(L.w2)), g.param(L.b2));
    x = ag::add(x, dropout(f, p, rng));
  }
  return ag::layer_norm(x, g.param(lnf_g_), g.param(lnf_b_));
}

Matrix TransformerEncoder::encode_chunk(const Chunk& chunk) const {
  Graph g(false);
  return encode(g, chunk.token_ids, chunk.mask).value();
}

Vector TransformerEncoder::encode_text(std::string_view text, const Vocab& vocab) const {
  std::vector<int> ids{Vocab::kCls};
  for (int id : tokenize(text, vocab)) {
    if (static_cast<int>(ids.size()) >= cfg_.max_position) break;
    ids.push_back(id);
  }
  std::vector<std::uint8_t> mask(ids.size(), 1);
  Graph g(false);
  return encode(g, ids, mask).value().row(0).transpose();
}

std::vector<const Param*> TransformerEncoder::params() const {
  std::vector<const Param*> out{&tok_emb_, &pos_emb_};
  for (const Layer& L : layers_) {
    for (const Param* p : {&L.ln1_g, &L.ln1_b, &L.wq, &L.bq, &L.wk, &L.wv, &L.bv, &L.wo,
                           &L.bo, &L.ln2_g, &L.ln2_b, &L.w1, &L.b1, &L.w2, &L.b2})
      out.push_back(p);
  }
  out.push_back(&lnf_g_);
  out.push_back(&lnf_b_);
  return out;
}

std::vector<Param*> TransformerEncoder::params() {
  std::vector<Param*> out;
  for (const Param* p : std::as_const(*this).params()) out.push_back(const_cast<Param*>(p));
  return out;
}

std::string TransformerEncoder::id() const {
  const auto ps = params();
  return hash_hex(cfg_.to_json().dump() + params_digest(ps));
}

Matrix encode_labels(const LabelSpace& labels, const SentenceEncoder& encoder) {
  Matrix out(static_cast<Eigen::Index>(labels.size()), encoder.dim());
  for (std::size_t i = 0; i < labels.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = encoder.encode(labels.description(i)).transpose();
  return out;
}

Json encoder_to_json(const TransformerEncoder& enc, const Vocab& vocab) {
  const auto ps = enc.params();
  return Json{{"format", "kgc.encoder"},
              {"version", 1},
              {"config", enc.config().to_json()},
              {"vocab_hash", vocab.hash()},
              {"vocab", vocab.tokens()},
              {"params", params_to_json(ps)}};
}

TransformerEncoder encoder_from_json(const Json& j, Vocab* vocab_out,
                                     const std::string& expected_vocab_hash) {
  if (j.value("format", "") != "kgc.encoder") throw ValidationError("not an encoder checkpoint");
  if (j.value("version", 0) != 1)
    throw ValidationError("unsupported encoder checkpoint version " +
                          std::to_string(j.value("version", 0)));
  const auto vocab_hash = j.at("vocab_hash").get<std::string>();
  if (!expected_vocab_hash.empty() && vocab_hash != expected_vocab_hash)
    throw ConfigError("encoder checkpoint vocab hash " + vocab_hash + " does not match " +
                      expected_vocab_hash);
  Vocab vocab = Vocab::from_tokens(j.at("vocab").get<std::vector<std::string>>());
  if (vocab.hash() != vocab_hash) throw ValidationError("encoder checkpoint vocab is corrupt");
  TransformerEncoder enc(EncoderConfig::from_json(j.at("config")));
  auto ps = enc.params();
  params_from_json(j.at("params"), ps);
  if (vocab_out) *vocab_out = std::move(vocab);
  return enc;
}

void save_encoder_checkpoint(const TransformerEncoder& enc, const Vocab& vocab,
                             const fs::path& path) {
  write_file_atomic(path, encoder_to_json(enc, vocab).dump());
}

TransformerEncoder load_encoder_checkpoint(const fs::path& path, Vocab* vocab_out,
                                           const std::string& expected_vocab_hash) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return encoder_from_json(j, vocab_out, expected_vocab_hash);
}

}  // namespace kgc
