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

#include "kgc/trace.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iterator>
#include <set>

#include "kgc/error.hpp"

namespace kgc {

namespace {

constexpr std::string_view kTraceFormat = "kgc.trace";

// Same boundaries as split_tokens, without lowercasing.
std::vector<std::string> surface_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Linear interpolation between closest ranks.
double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::string escape_html(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

// Escaped text with tokens found in `vocab` wrapped in <b><u>.
std::string annotate(std::string_view text, const std::set<std::string>& vocab) {
  std::string out;
  for (const auto& tok : surface_tokens(text)) {
    if (!out.empty()) out += ' ';
    const std::string e = escape_html(tok);
    out += vocab.count(lower(tok)) ? "<b><u>" + e + "</u></b>" : e;
  }
  return out;
}

std::string_view source_color(Source s) {
  switch (s) {
    case Source::kUmls: return "#c0392b";
    case Source::kWikipedia: return "#1f5fa8";
    case Source::kLlm: return "#1e8449";
  }
  return "#000000";
}

template <typename T>
T field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw ValidationError(std::string("trace report: missing \"") + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ValidationError(std::string("trace report: bad type for \"") + key + "\"");
  }
}

}  // namespace

Prediction predict(const Model& model, const Document& doc, const std::string& expected_vocab_hash) {
  if (!expected_vocab_hash.empty() && expected_vocab_hash != model.vocab().hash())
    throw ConfigError("vocabulary hash mismatch: checkpoint has " + model.vocab().hash() +
                      ", expected " + expected_vocab_hash);
  Prediction p;
  p.doc_id = doc.id;
  p.tokens = surface_tokens(doc.text);
  const auto& ch = model.config().chunking;
  if (static_cast<int>(p.tokens.size()) > ch.max_length)
    p.tokens.resize(static_cast<std::size_t>(ch.max_length));
  p.chunks = model.chunk_text(doc.text, doc.id);
  for (std::size_t c = 0; c < p.chunks.size(); ++c)
    p.chunk_starts.push_back(static_cast<int>(c) * ch.effective_stride());
  Graph g(false);
  ForwardPass fp = forward(g, model, p.chunks);
  p.scores = fp.probs.value().col(0);
  p.lsa = std::move(fp.lsa);
  p.lcca = std::move(fp.lcca);
  p.kcca = std::move(fp.kcca);
  return p;
}

std::string_view to_string(Mechanism m) { return m == Mechanism::kLsa ? "lsa" : "lcca"; }

Mechanism parse_mechanism(std::string_view s) {
  if (s == "lsa") return Mechanism::kLsa;
  if (s == "lcca") return Mechanism::kLcca;
  throw ValidationError("unknown mechanism \"" + std::string(s) + "\"");
}

std::vector<TextEvidence> extract_spans(const AttentionOutput& out, const Prediction& pred,
                                        std::size_t label, Mechanism mechanism) {
  if (out.weights.size() != pred.chunks.size())
    throw ShapeError("extract_spans: one weight map per chunk expected");
  const auto row = static_cast<Eigen::Index>(label);
  std::vector<double> real;
  for (std::size_t c = 0; c < pred.chunks.size(); ++c) {
    if (row >= out.weights[c].rows()) throw ShapeError("extract_spans: label out of range");
    const auto& mask = pred.chunks[c].mask;
    for (std::size_t t = 0; t < mask.size(); ++t)
      if (mask[t]) real.push_back(out.weights[c](row, static_cast<Eigen::Index>(t)));
  }
  if (real.empty()) return {};
  const double cut = percentile(real, 0.9);

  std::vector<TextEvidence> spans;
  auto add = [&](std::size_t c, int s, int e) {
    TextEvidence ev;
    ev.chunk = static_cast<int>(c);
    ev.start = s;
    ev.end = e;
    ev.mechanism = mechanism;
    ev.weight = out.weights[c](row, s);
    for (int t = s; t < e; ++t) {
      ev.weight = std::max(ev.weight, out.weights[c](row, t));
      const auto pos = static_cast<std::size_t>(pred.chunk_starts[c] + t);
      if (!ev.text.empty()) ev.text += ' ';
      ev.text += pos < pred.tokens.size() ? pred.tokens[pos] : std::string();
    }
    spans.push_back(std::move(ev));
  };
  for (std::size_t c = 0; c < pred.chunks.size(); ++c) {
    const auto& mask = pred.chunks[c].mask;
    const int n = static_cast<int>(mask.size());
    int t = 0;
    while (t < n) {
      if (!mask[static_cast<std::size_t>(t)] || !(out.weights[c](row, t) > cut)) {
        ++t;
        continue;
      }
      const int s = t;
      while (t < n && mask[static_cast<std::size_t>(t)] && out.weights[c](row, t) > cut) ++t;
      add(c, s, t);
    }
  }
  if (spans.empty()) {
    // Flat distributions: nothing clears the percentile, so report the peak.
    std::size_t bc = 0;
    int bt = -1;
    for (std::size_t c = 0; c < pred.chunks.size(); ++c)
      for (int t = 0; t < static_cast<int>(pred.chunks[c].mask.size()); ++t)
        if (pred.chunks[c].mask[static_cast<std::size_t>(t)] &&
            (bt < 0 || out.weights[c](row, t) > out.weights[bc](row, bt))) {
          bc = c;
          bt = t;
        }
    add(bc, bt, bt + 1);
  }
  std::stable_sort(spans.begin(), spans.end(), [](const TextEvidence& a, const TextEvidence& b) {
    return a.weight > b.weight;
  });
  return spans;
}

TraceReport build_trace(const Prediction& pred, const Model& model, const KnowledgeMatrix& km,
                        const TraceOptions& opts) {
  const LabelSpace& labels = model.labels();
  if (static_cast<std::size_t>(pred.scores.size()) != labels.size())
    throw ShapeError("build_trace: score count differs from the label space");
  if (!opts.label_thresholds.empty() && opts.label_thresholds.size() != labels.size())
    throw ConfigError("build_trace: one threshold per label required");
  if (opts.top_k_spans < 0 || opts.top_k_knowledge < 0)
    throw ConfigError("build_trace: top-k values must be non-negative");

  TraceReport report;
  report.doc_id = pred.doc_id;
  report.threshold = opts.threshold;
  report.top_k_spans = opts.top_k_spans;
  report.top_k_knowledge = opts.top_k_knowledge;
  report.model_id = opts.model_id;
  const auto k_spans = static_cast<std::size_t>(opts.top_k_spans);
  const int m = model.config().m;

  for (std::size_t l = 0; l < labels.size(); ++l) {
    const double thr = opts.label_thresholds.empty() ? opts.threshold : opts.label_thresholds[l];
    const double prob = pred.scores(static_cast<Eigen::Index>(l));
    if (!(prob >= thr)) continue;
    CodeTrace ct;
    ct.code = labels.code(l);
    ct.description = labels.description(l);
    ct.probability = prob;
    ct.threshold = thr;

    for (auto [mech, out] : {std::pair{Mechanism::kLsa, &pred.lsa},
                             std::pair{Mechanism::kLcca, &pred.lcca}}) {
      if (!out->has_value()) continue;
      auto spans = extract_spans(**out, pred, l, mech);
      if (spans.size() > k_spans) spans.resize(k_spans);
      ct.text_evidence.insert(ct.text_evidence.end(), spans.begin(), spans.end());
    }
    std::stable_sort(ct.text_evidence.begin(), ct.text_evidence.end(),
                     [](const TextEvidence& a, const TextEvidence& b) { return a.weight > b.weight; });

    if (pred.kcca && opts.top_k_knowledge > 0) {
      const CodeKnowledge& ck = km.at(ct.code);
      const Matrix& w = pred.kcca->weights.front();
      const int t_len = pred.chunks.empty() ? 0 : static_cast<int>(pred.chunks.front().mask.size());
      std::set<int> cols;
      for (const auto& ev : ct.text_evidence)
        for (int t = ev.start; t < ev.end; ++t) cols.insert(ev.chunk * t_len + t);
      if (cols.empty())
        for (std::size_t c = 0; c < pred.chunks.size(); ++c)
          for (int t = 0; t < t_len; ++t)
            if (pred.chunks[c].mask[static_cast<std::size_t>(t)]) cols.insert(static_cast<int>(c) * t_len + t);

      std::vector<double> per_entry(ck.selected.size(), 0.0);
      for (int r = 0; r < m; ++r) {
        const auto row = static_cast<Eigen::Index>(l) * m + r;
        double s = 0.0;
        for (int col : cols) s += w(row, col);
        per_entry[static_cast<std::size_t>(ck.row_entry[static_cast<std::size_t>(r)])] += s;
      }
      std::vector<std::size_t> order(per_entry.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return per_entry[a] > per_entry[b]; });
      if (order.size() > static_cast<std::size_t>(opts.top_k_knowledge))
        order.resize(static_cast<std::size_t>(opts.top_k_knowledge));
      for (std::size_t i : order) {
        const KnowledgeEntry& e = ck.selected[i];
        ct.knowledge_evidence.push_back({e.text, e.source, e.provenance, per_entry[i]});
      }
    }
    report.codes.push_back(std::move(ct));
  }
  return report;
}

Json TraceReport::to_json() const {
  Json codes_json = Json::array();
  for (const auto& c : codes) {
    Json text = Json::array();
    for (const auto& ev : c.text_evidence)
      text.push_back({{"chunk", ev.chunk},
                      {"start", ev.start},
                      {"end", ev.end},
                      {"text", ev.text},
                      {"mechanism", to_string(ev.mechanism)},
                      {"weight", ev.weight}});
    Json know = Json::array();
    for (const auto& ev : c.knowledge_evidence)
      know.push_back({{"text", ev.text},
                      {"source", to_string(ev.source)},
                      {"provenance", ev.provenance},
                      {"weight", ev.weight}});
    codes_json.push_back({{"code", c.code},
                          {"description", c.description},
                          {"probability", c.probability},
                          {"threshold", c.threshold},
                          {"text_evidence", std::move(text)},
                          {"knowledge_evidence", std::move(know)}});
  }
  return {{"format", kTraceFormat},
          {"version", kVersion},
          {"doc_id", doc_id},
          {"threshold", threshold},
          {"top_k_spans", top_k_spans},
          {"top_k_knowledge", top_k_knowledge},
          {"model_id", model_id},
          {"codes", std::move(codes_json)}};
}

TraceReport TraceReport::from_json(const Json& j) {
  if (field<std::string>(j, "format") != kTraceFormat)
    throw ValidationError("trace report: unexpected format");
  if (field<int>(j, "version") != kVersion)
    throw ValidationError("trace report: unsupported version");
  TraceReport r;
  r.doc_id = field<std::string>(j, "doc_id");
  r.threshold = field<double>(j, "threshold");
  r.top_k_spans = field<int>(j, "top_k_spans");
  r.top_k_knowledge = field<int>(j, "top_k_knowledge");
  r.model_id = field<std::string>(j, "model_id");
  for (const auto& cj : field<Json>(j, "codes")) {
    CodeTrace c;
    c.code = field<std::string>(cj, "code");
    c.description = field<std::string>(cj, "description");
    c.probability = field<double>(cj, "probability");
    c.threshold = field<double>(cj, "threshold");
    for (const auto& ej : field<Json>(cj, "text_evidence"))
      c.text_evidence.push_back({field<int>(ej, "chunk"), field<int>(ej, "start"),
                                 field<int>(ej, "end"), field<std::string>(ej, "text"),
                                 parse_mechanism(field<std::string>(ej, "mechanism")),
                                 field<double>(ej, "weight")});
    for (const auto& ej : field<Json>(cj, "knowledge_evidence")) {
      Source src;
      try {
        src = parse_source(field<std::string>(ej, "source"));
      } catch (const Error& e) {
        throw ValidationError(std::string("trace report: ") + e.what());
      }
      c.knowledge_evidence.push_back({field<std::string>(ej, "text"), src,
                                      field<std::string>(ej, "provenance"),
                                      field<double>(ej, "weight")});
    }
    r.codes.push_back(std::move(c));
  }
  return r;
}

std::string render_html(const TraceReport& report) {
  std::string h;
  h += "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n";
  h += "<title>Trace " + escape_html(report.doc_id) + "</title>\n<style>\n";
  h += "body{font-family:sans-serif;max-width:60em;margin:2em auto;}\n";
  h += "mark.lsa{background:#fde68a;}\nmark.lcca{background:#c7d2fe;}\n";
  h += ".w{color:#666;font-size:85%;}\n</style>\n</head>\n<body>\n";
  h += "<h1>Document " + escape_html(report.doc_id) + "</h1>\n";
  h += "<p class=\"w\">model " + escape_html(report.model_id) + ", threshold " +
       Json(report.threshold).dump() + ", " + std::to_string(report.codes.size()) +
       " predicted codes</p>\n";
  h += "<p class=\"w\">Sources: <span style=\"color:" + std::string(source_color(Source::kUmls)) +
       "\">umls</span> <span style=\"color:" + std::string(source_color(Source::kWikipedia)) +
       "\">wikipedia</span> <span style=\"color:" + std::string(source_color(Source::kLlm)) +
       "\">llm</span></p>\n";
  for (const auto& c : report.codes) {
    std::set<std::string> span_tokens, know_tokens;
    for (const auto& ev : c.text_evidence)
      for (const auto& t : surface_tokens(ev.text)) span_tokens.insert(lower(t));
    for (const auto& ev : c.knowledge_evidence)
      for (const auto& t : surface_tokens(ev.text)) know_tokens.insert(lower(t));
    std::set<std::string> overlap;
    std::set_intersection(span_tokens.begin(), span_tokens.end(), know_tokens.begin(),
                          know_tokens.end(), std::inserter(overlap, overlap.end()));

    h += "<section>\n<h2>" + escape_html(c.code) + " " + escape_html(c.description) + "</h2>\n";
    h += "<p class=\"w\">probability " + Json(c.probability).dump() + " (threshold " +
         Json(c.threshold).dump() + ")</p>\n";
    h += "<h3>Text evidence</h3>\n<ol>\n";
    for (const auto& ev : c.text_evidence)
      h += "<li><mark class=\"" + std::string(to_string(ev.mechanism)) + "\">" +
           annotate(ev.text, overlap) + "</mark> <span class=\"w\">" +
           std::string(to_string(ev.mechanism)) + " chunk " + std::to_string(ev.chunk) + " [" +
           std::to_string(ev.start) + ", " + std::to_string(ev.end) + ") weight " +
           Json(ev.weight).dump() + "</span></li>\n";
    h += "</ol>\n<h3>Knowledge evidence</h3>\n<ol>\n";
    for (const auto& ev : c.knowledge_evidence)
      h += "<li style=\"color:" + std::string(source_color(ev.source)) + "\">" +
           annotate(ev.text, overlap) + " <span class=\"w\">" +
           std::string(to_string(ev.source)) + ", " + escape_html(ev.provenance) + ", weight " +
           Json(ev.weight).dump() + "</span></li>\n";
    h += "</ol>\n</section>\n";
  }
  h += "</body>\n</html>\n";
  return h;
}

void render_report(const TraceReport& report, ReportFormat format,
                   const std::filesystem::path& path) {
  const std::string body =
      format == ReportFormat::kStructured ? report.to_json().dump(2) + "\n" : render_html(report);
  write_file_atomic(path, body);
}

}  // namespace kgc
