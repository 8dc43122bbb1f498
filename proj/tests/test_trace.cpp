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

#include <fstream>

#include "catch_amalgamated.hpp"
#include "kgc/trace.hpp"
#include "support.hpp"
#include "trace_check.hpp"

using namespace kgc;
using Catch::Matchers::ContainsSubstring;

namespace {

// A briefly trained model on a small synthetic corpus; two chunks per
// document so cross-chunk positions are exercised.
const testing::SmokeRun& fixture() {
  static const testing::SmokeRun run = [] {
    TrainConfig cfg = testing::smoke_config();
    cfg.d = 16;
    cfg.ff = 32;
    cfg.m = 4;
    cfg.conv_filters = 4;
    cfg.epochs = 3;
    cfg.chunk_size = 24;
    cfg.max_length = 48;
    SyntheticConfig sc;
    sc.n_docs = 16;
    sc.n_labels = 5;
    sc.vocab_size = 60;
    sc.seed = 4;
    testing::SmokeRun r = testing::prepare_run(cfg, sc, "trace_fixture");
    r.result = train(cfg, r.model, r.splits.train, r.splits.dev);
    return r;
  }();
  return run;
}

const Document& longest_doc() {
  const auto& docs = fixture().data.corpus.docs;
  return *std::max_element(docs.begin(), docs.end(), [](const Document& a, const Document& b) {
    return split_tokens(a.text).size() < split_tokens(b.text).size();
  });
}

TraceReport trace_all(const Document& doc, int top_k_knowledge = 8) {
  const auto& f = fixture();
  const Prediction p = predict(f.result.model, doc);
  TraceOptions o;
  o.threshold = 0.0;
  o.top_k_knowledge = top_k_knowledge;
  o.model_id = "fixture";
  return build_trace(p, f.result.model, f.km, o);
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("predict is deterministic and shaped by the label space") {
  const auto& f = fixture();
  const Document& doc = longest_doc();
  const Prediction a = predict(f.result.model, doc);
  const Prediction b = predict(f.result.model, doc);
  CHECK(a.scores.size() == 5);
  CHECK(a.scores == b.scores);
  REQUIRE(a.lsa.has_value());
  for (std::size_t c = 0; c < a.chunks.size(); ++c) CHECK(a.lsa->weights[c] == b.lsa->weights[c]);
  CHECK(a.kcca->weights.front() == b.kcca->weights.front());
  CHECK(a.chunks.size() >= 2);
  CHECK_THROWS_AS(predict(f.result.model, doc, "not-the-vocab"), ConfigError);
  CHECK_THROWS_AS(predict(f.result.model, Document{"blank", "", {}}), ValidationError);
}

TEST_CASE("trace weights match a fresh forward pass") {
  const auto& f = fixture();
  for (const Document& doc : f.data.corpus.docs) {
    const TraceReport r = trace_all(doc);
    REQUIRE(r.codes.size() == 5);
    const Prediction rerun = predict(f.result.model, doc);
    CHECK(testing::verify_trace(r, rerun, f.result.model, f.km).empty());
    for (const CodeTrace& ct : r.codes) {
      const auto lsa = std::count_if(ct.text_evidence.begin(), ct.text_evidence.end(),
                                     [](const TextEvidence& e) { return e.mechanism == Mechanism::kLsa; });
      CHECK(lsa >= 1);
      CHECK(lsa <= 3);
      CHECK(ct.text_evidence.size() - static_cast<std::size_t>(lsa) <= 3);
      for (const auto& ev : ct.text_evidence) {
        CHECK(ev.end > ev.start);
        CHECK_FALSE(ev.text.empty());
      }
    }
  }
}

TEST_CASE("spans are runs above the percentile cut") {
  const auto& f = fixture();
  const Prediction p = predict(f.result.model, longest_doc());
  for (std::size_t l = 0; l < 5; ++l) {
    std::vector<double> real;
    for (std::size_t c = 0; c < p.chunks.size(); ++c)
      for (std::size_t t = 0; t < p.chunks[c].mask.size(); ++t)
        if (p.chunks[c].mask[t]) real.push_back(p.lsa->weights[c](static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(t)));
    std::sort(real.begin(), real.end());
    const double pos = 0.9 * static_cast<double>(real.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double cut = real[lo] + (pos - static_cast<double>(lo)) * (real[std::min(lo + 1, real.size() - 1)] - real[lo]);
    std::size_t above = 0;
    for (double v : real) above += v > cut;
    const auto spans = extract_spans(*p.lsa, p, l, Mechanism::kLsa);
    std::size_t covered = 0;
    for (const auto& s : spans) {
      covered += static_cast<std::size_t>(s.end - s.start);
      const Matrix& w = p.lsa->weights[static_cast<std::size_t>(s.chunk)];
      if (above > 0) {
        for (int t = s.start; t < s.end; ++t) CHECK(w(static_cast<Eigen::Index>(l), t) > cut);
        if (s.start > 0) CHECK_FALSE(w(static_cast<Eigen::Index>(l), s.start - 1) > cut);
      }
    }
    CHECK(covered == std::max<std::size_t>(above, 1));
  }
}

TEST_CASE("knowledge evidence lists every selected entry when asked") {
  const auto& f = fixture();
  const TraceReport r = trace_all(longest_doc(), 4);
  for (const CodeTrace& ct : r.codes) {
    const CodeKnowledge& ck = f.km.at(ct.code);
    CHECK(ct.knowledge_evidence.size() == ck.selected.size());
    for (std::size_t i = 1; i < ct.knowledge_evidence.size(); ++i)
      CHECK(ct.knowledge_evidence[i - 1].weight >= ct.knowledge_evidence[i].weight);
  }
  for (const CodeTrace& ct : trace_all(longest_doc(), 1).codes) CHECK(ct.knowledge_evidence.size() == 1);
  for (const CodeTrace& ct : trace_all(longest_doc(), 0).codes) CHECK(ct.knowledge_evidence.empty());
}

TEST_CASE("threshold one yields an empty report with metadata") {
  const auto& f = fixture();
  const Prediction p = predict(f.result.model, longest_doc());
  TraceOptions o;
  o.threshold = 1.0;
  o.model_id = "m";
  const TraceReport r = build_trace(p, f.result.model, f.km, o);
  CHECK(r.codes.empty());
  CHECK(r.doc_id == longest_doc().id);
  CHECK(r.threshold == 1.0);
  const Json j = r.to_json();
  CHECK(j["codes"].empty());
  CHECK(j["model_id"] == "m");
  const auto dir = testing::temp_dir("trace_empty");
  render_report(r, ReportFormat::kReadable, dir / "r.html");
  const std::string html = read_file(dir / "r.html");
  CHECK_THAT(html, ContainsSubstring("</html>"));
  CHECK(count(html, "<mark") == 0);
}

TEST_CASE("structured reports round trip") {
  const TraceReport r = trace_all(longest_doc());
  const auto dir = testing::temp_dir("trace_rt");
  render_report(r, ReportFormat::kStructured, dir / "r.json");
  const TraceReport back = TraceReport::from_json(Json::parse(read_file(dir / "r.json")));
  CHECK(back == r);
  CHECK(back.to_json() == r.to_json());
  Json bad = r.to_json();
  bad["format"] = "something-else";
  CHECK_THROWS_AS(TraceReport::from_json(bad), ValidationError);
  bad = r.to_json();
  bad["codes"][0]["text_evidence"][0]["mechanism"] = "kcca";
  CHECK_THROWS_AS(TraceReport::from_json(bad), ValidationError);
  std::ofstream(dir / "plain") << "x";
  CHECK_THROWS_AS(render_report(r, ReportFormat::kStructured, dir / "plain" / "r.json"), Error);
}

TEST_CASE("readable reports highlight each span and colour sources") {
  const TraceReport r = trace_all(longest_doc());
  std::size_t spans = 0;
  for (const auto& ct : r.codes) spans += ct.text_evidence.size();
  const std::string html = render_html(r);
  CHECK(count(html, "<mark") == spans);
  CHECK(count(html, "<mark class=\"lsa\"") + count(html, "<mark class=\"lcca\"") == spans);
  CHECK_THAT(html, ContainsSubstring("#c0392b"));

  TraceReport crafted;
  crafted.doc_id = "x<y";
  CodeTrace ct;
  ct.code = "A1";
  ct.description = "d";
  ct.text_evidence = {{0, 0, 2, "renal failure", Mechanism::kLsa, 0.5}};
  ct.knowledge_evidence = {{"kidney failure", Source::kUmls, "p", 0.3},
                           {"about kidneys", Source::kWikipedia, "p", 0.2},
                           {"renal text", Source::kLlm, "p", 0.1}};
  crafted.codes.push_back(ct);
  const std::string h = render_html(crafted);
  CHECK_THAT(h, ContainsSubstring("x&lt;y"));
  CHECK_THAT(h, ContainsSubstring("#1f5fa8"));
  CHECK_THAT(h, ContainsSubstring("#1e8449"));
  CHECK_THAT(h, ContainsSubstring("<b><u>failure</u></b>"));
  CHECK_THAT(h, ContainsSubstring("<b><u>renal</u></b>"));
}
