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

// Evidence extraction for predicted codes: weighted text spans from the
// label-wise and label-context attention maps, and ranked knowledge entries
// from the knowledge-context attention map.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgc/diversity.hpp"
#include "kgc/model.hpp"

namespace kgc {

/// Eval-mode forward pass with every attention map retained.
struct Prediction {
  std::string doc_id;
  std::vector<std::string> tokens;  // surface tokens after truncation
  std::vector<Chunk> chunks;
  std::vector<int> chunk_starts;  // token offset of each chunk
  Vector scores;  // (L_n)
  std::optional<AttentionOutput> lsa, lcca, kcca;
};

/// Throws ConfigError when expected_vocab_hash is non-empty and differs from
/// the model's vocabulary, and ValidationError when the document has no
/// attendable tokens.
Prediction predict(const Model& model, const Document& doc,
                   const std::string& expected_vocab_hash = {});

enum class Mechanism { kLsa, kLcca };
std::string_view to_string(Mechanism m);
Mechanism parse_mechanism(std::string_view s);

struct TextEvidence {
  int chunk = 0;
  int start = 0;  // position inside the chunk
  int end = 0;    // exclusive
  std::string text;
  Mechanism mechanism = Mechanism::kLsa;
  double weight = 0.0;  // peak attention weight inside the span

  bool operator==(const TextEvidence&) const = default;
};

struct KnowledgeEvidence {
  std::string text;
  Source source = Source::kUmls;
  std::string provenance;
  double weight = 0.0;

  bool operator==(const KnowledgeEvidence&) const = default;
};

struct CodeTrace {
  std::string code;
  std::string description;
  double probability = 0.0;
  double threshold = 0.0;
  std::vector<TextEvidence> text_evidence;
  std::vector<KnowledgeEvidence> knowledge_evidence;

  bool operator==(const CodeTrace&) const = default;
};

struct TraceReport {
  static constexpr int kVersion = 1;

  std::string doc_id;
  double threshold = 0.5;
  int top_k_spans = 0;
  int top_k_knowledge = 0;
  std::string model_id;  // config hash of the producing checkpoint
  std::vector<CodeTrace> codes;

  bool operator==(const TraceReport&) const = default;

  Json to_json() const;
  /// Throws ValidationError on a malformed or foreign document.
  static TraceReport from_json(const Json& j);
};

/// Maximal runs of positions whose weight exceeds the 90th percentile of the
/// code's non-padding weights (over all chunks), falling back to the single
/// argmax position when no weight clears it. Sorted by weight descending,
/// then chunk and start.
std::vector<TextEvidence> extract_spans(const AttentionOutput& out, const Prediction& pred,
                                        std::size_t label, Mechanism mechanism);

struct TraceOptions {
  double threshold = 0.5;
  /// Per-label thresholds; overrides `threshold` when non-empty.
  std::vector<double> label_thresholds;
  int top_k_spans = 3;
  int top_k_knowledge = 8;
  std::string model_id;
};

/// Codes whose probability reaches their threshold, in label order. Each gets
/// up to top_k_spans spans per mechanism and up to top_k_knowledge entries of
/// its selected knowledge, ranked by knowledge-attention weight on the
/// positions its text evidence covers.
TraceReport build_trace(const Prediction& pred, const Model& model, const KnowledgeMatrix& km,
                        const TraceOptions& opts);

enum class ReportFormat { kStructured, kReadable };

/// Writes JSON or a standalone HTML page. Throws Error on an unwritable path.
void render_report(const TraceReport& report, ReportFormat format,
                   const std::filesystem::path& path);
std::string render_html(const TraceReport& report);

}  // namespace kgc
