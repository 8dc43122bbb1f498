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

// Desk-scale pre-norm transformer used for chunk encoding, pooled sentence
// vectors ([cls] output) and the frozen label matrix.

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kgc/autograd.hpp"
#include "kgc/corpus.hpp"
#include "kgc/io.hpp"
#include "kgc/sentence_encoder.hpp"

namespace kgc {

struct EncoderConfig {
  int vocab_size = 0;
  int d = 128;
  int layers = 2;
  int heads = 4;
  int ff = 256;
  int max_position = 512;  // chunk size T
  double dropout = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  Json to_json() const;
  static EncoderConfig from_json(const Json& j);
};

/// Serialised parameter list: {name: {"rows", "cols", "data"}} in row-major order.
Json params_to_json(std::span<const Param* const> params);
/// Loads values into existing params by name; shape mismatches throw.
void params_from_json(const Json& j, std::span<Param* const> params);
/// Digest of parameter names, shapes and raw values.
std::string params_digest(std::span<const Param* const> params);

class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  /// Random initialisation from cfg.seed.
  explicit TransformerEncoder(const EncoderConfig& cfg);

  const EncoderConfig& config() const { return cfg_; }

  /// (T, d) contextual states of one window. Keys at mask == 0 are excluded
  /// from self-attention, so padding ids never influence real positions.
  /// With a non-null rng and cfg.dropout > 0, dropout is applied.
  Var encode(Graph& g, std::span<const int> ids, std::span<const std::uint8_t> mask,
             std::mt19937_64* rng = nullptr) const;

  Matrix encode_chunk(const Chunk& chunk) const;

  /// Final-layer [cls] state of "[cls] tokens..." (truncated to T positions).
  Vector encode_text(std::string_view text, const Vocab& vocab) const;

  std::vector<const Param*> params() const;
  std::vector<Param*> params();

  /// Hash of the configuration and every parameter value.
  std::string id() const;

 private:
  struct Layer {
    Param ln1_g, ln1_b, wq, bq, wk, wv, bv, wo, bo;
    Param ln2_g, ln2_b, w1, b1, w2, b2;
  };

  EncoderConfig cfg_;
  Param tok_emb_;
  Param pos_emb_;
  std::vector<Layer> layers_;
  Param lnf_g_, lnf_b_;
};

/// SentenceEncoder view of a transformer plus its vocabulary.
class TransformerSentenceEncoder final : public SentenceEncoder {
 public:
  TransformerSentenceEncoder(const TransformerEncoder& enc, const Vocab& vocab)
      : enc_(enc), vocab_(vocab) {}
  Eigen::Index dim() const override { return enc_.config().d; }
  Vector encode(std::string_view text) const override { return enc_.encode_text(text, vocab_); }
  std::string id() const override { return enc_.id() + ":" + vocab_.hash(); }

 private:
  const TransformerEncoder& enc_;
  const Vocab& vocab_;
};

/// Row i = encoding of description i; row order follows the label space.
Matrix encode_labels(const LabelSpace& labels, const SentenceEncoder& encoder);

/// Versioned encoder checkpoint: config, vocab (and its hash), parameters.
void save_encoder_checkpoint(const TransformerEncoder& enc, const Vocab& vocab,
                             const std::filesystem::path& path);
/// Throws ConfigError when expected_vocab_hash is non-empty and differs.
TransformerEncoder load_encoder_checkpoint(const std::filesystem::path& path, Vocab* vocab_out,
                                           const std::string& expected_vocab_hash = {});

Json encoder_to_json(const TransformerEncoder& enc, const Vocab& vocab);
TransformerEncoder encoder_from_json(const Json& j, Vocab* vocab_out,
                                     const std::string& expected_vocab_hash = {});

}  // namespace kgc
