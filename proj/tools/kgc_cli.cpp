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

// Command-line driver: data preparation, knowledge building and selection,
// training, evaluation, prediction and tracing.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "kgc/corpus.hpp"
#include "kgc/diversity.hpp"
#include "kgc/error.hpp"
#include "kgc/knowledge.hpp"
#include "kgc/metrics.hpp"
#include "kgc/synthetic.hpp"
#include "kgc/trace.hpp"
#include "kgc/train.hpp"

namespace fs = std::filesystem;
using namespace kgc;

namespace {

struct Overrides {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> m;
  std::optional<std::string> sources;
  bool disable_lsa = false;
  bool disable_lcca = false;
  bool disable_kcca = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON file of training config keys")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "Config override key=value (repeatable)");
    app->add_option("--seed", seed, "Seed for every random choice");
    app->add_option("--m", m, "Knowledge entries selected per code");
    app->add_option("--sources", sources, "Knowledge sources, e.g. umls,wikipedia,llm");
    app->add_flag("--disable-lsa", disable_lsa, "Disable label-wise self-attention");
    app->add_flag("--disable-lcca", disable_lcca, "Disable label-context cross-attention");
    app->add_flag("--disable-kcca", disable_kcca, "Disable knowledge-context cross-attention");
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config.empty()) cfg = load_train_config(config, cfg);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ConfigError("override \"" + kv + "\" is not key=value");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    if (m) cfg.m = *m;
    if (sources) cfg.sources = *sources;
    if (disable_lsa) cfg.lsa = false;
    if (disable_lcca) cfg.lcca = false;
    if (disable_kcca) cfg.kcca = false;
    cfg.validate();
    return cfg;
  }
};

struct DataPaths {
  std::string corpus;
  std::string labels;
  std::string splits;

  void attach(CLI::App* app, bool need_splits) {
    app->add_option("--corpus", corpus, "Documents, one JSON object per line")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--labels", labels, "Label space file")->check(CLI::ExistingFile);
    auto* s = app->add_option("--splits", splits, "Split assignment file")->check(CLI::ExistingFile);
    if (need_splits) s->required();
  }

  Corpus load() const {
    std::optional<LabelSpace> ls;
    if (!labels.empty()) ls = load_label_space(labels);
    return load_corpus(corpus, ls);
  }
};

std::vector<int> parse_ns(const std::string& csv, std::size_t n_labels) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto end = csv.find(',', start);
    const std::string item = csv.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (!item.empty()) {
      int n = 0;
      try {
        n = std::stoi(item);
      } catch (const std::exception&) {
        throw ConfigError("bad --p-at entry \"" + item + "\"");
      }
      out.push_back(n);
    }
    if (end == std::string::npos) break;
    start = end + 1;
  }
  if (out.empty()) {
    for (int n : {5, 8, 15})
      if (static_cast<std::size_t>(n) <= n_labels) out.push_back(n);
    if (out.empty()) out.push_back(static_cast<int>(n_labels));
  }
  return out;
}

Json read_json_file(const fs::path& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

const Document& find_doc(const Corpus& corpus, const std::string& id) {
  for (const auto& d : corpus.docs)
    if (d.id == id) return d;
  throw ValidationError("document \"" + id + "\" not in corpus");
}

// ---------------------------------------------------------------------------

void cmd_prepare(const DataPaths& data, const std::string& out) {
  const Corpus corpus = data.load();
  const SplitCorpora parts = split(corpus, load_splits(data.splits));
  const fs::path dir(out);
  save_label_space(corpus.labels, dir / "labels.jsonl");
  save_corpus(parts.train, dir / "train.jsonl");
  save_corpus(parts.dev, dir / "dev.jsonl");
  save_corpus(parts.test, dir / "test.jsonl");
  spdlog::info("prepared {} docs over {} labels: train {}, dev {}, test {}", corpus.size(),
               corpus.labels.size(), parts.train.size(), parts.dev.size(), parts.test.size());
}

void cmd_gen_synthetic(const SyntheticConfig& sc, const std::string& out) {
  write_synthetic(generate_synthetic(sc), out);
  spdlog::info("wrote synthetic corpus ({} docs, {} labels) to {}", sc.n_docs, sc.n_labels, out);
}

struct KbArgs {
  std::string labels;
  std::string synonyms;
  std::vector<std::string> knowledge;
  std::string wikipedia_titles;
  std::string wikipedia_config;
  std::string llm_config;
  std::string cache_dir = "kgc_cache";
  std::string out;
};

ClientConfig client_config(const std::string& path) {
  return path.empty() ? ClientConfig{} : ClientConfig::from_json(read_json_file(path));
}

void cmd_build_kb(const KbArgs& a, const TrainConfig& cfg) {
  const LabelSpace labels = load_label_space(a.labels);
  const SourceSet sources = cfg.source_set();
  std::map<Source, std::vector<KnowledgeEntry>> inputs;
  if (!a.synonyms.empty()) {
    auto res = load_umls_synonyms(a.synonyms, labels);
    if (res.skipped_codes) spdlog::warn("skipped {} synonym codes outside the label space", res.skipped_codes);
    inputs[Source::kUmls] = std::move(res.entries);
  }
  for (const auto& path : a.knowledge)
    for (auto& e : load_knowledge_entries(path)) inputs[e.source].push_back(std::move(e));

  HttplibTransport transport;
  if (sources.count(Source::kWikipedia) && !a.wikipedia_titles.empty()) {
    std::vector<std::pair<std::string, std::string>> titles;
    read_jsonl(a.wikipedia_titles, [&](const Json& j, std::size_t line) {
      if (!j.contains("code") || !j.contains("title") || !j["code"].is_string() || !j["title"].is_string())
        throw ParseError(a.wikipedia_titles, line, "expected {\"code\", \"title\"}");
      titles.emplace_back(j["code"].get<std::string>(), j["title"].get<std::string>());
    });
    const ClientConfig cc = client_config(a.wikipedia_config);
    DiskCache cache(fs::path(a.cache_dir) / "wikipedia");
    WikipediaClient client(cc, transport, cache);
    std::vector<std::vector<KnowledgeEntry>> got(titles.size());
    run_bounded(titles.size(), cc.concurrency, [&](std::size_t i) {
      got[i] = client.fetch(titles[i].first, titles[i].second);
    });
    for (auto& list : got)
      for (auto& e : list) inputs[Source::kWikipedia].push_back(std::move(e));
    if (client.misses()) spdlog::warn("{} wikipedia titles not found", client.misses());
  }
  if (sources.count(Source::kLlm) && !a.llm_config.empty()) {
    const ClientConfig cc = client_config(a.llm_config);
    std::string tmpl(LlmClient::kDefaultTemplate);
    if (!cc.prompt_template_path.empty()) tmpl = read_file(cc.prompt_template_path);
    DiskCache cache(fs::path(a.cache_dir) / "llm");
    LlmClient client(cc, tmpl, transport, cache);
    std::vector<std::vector<KnowledgeEntry>> got(labels.size());
    run_bounded(labels.size(), cc.concurrency, [&](std::size_t i) {
      got[i] = client.fetch(labels.code(i), labels.description(i));
    });
    for (auto& list : got)
      for (auto& e : list) inputs[Source::kLlm].push_back(std::move(e));
  }

  const KnowledgeBase kb = build_kb(labels, sources, inputs);
  kb.save(a.out);
  spdlog::info("knowledge base: {} entries over {} codes", kb.total(), kb.codes().size());
}

void cmd_select(const DataPaths& data, const std::string& kb_path, const std::string& out,
                const TrainConfig& cfg) {
  const Corpus corpus = data.load();
  const SplitCorpora parts = split(corpus, load_splits(data.splits));
  const KnowledgeBase kb = KnowledgeBase::load(kb_path, corpus.labels);
  const EncoderSnapshot snap = initial_encoder(cfg, parts.train);
  const TransformerSentenceEncoder se(snap.encoder, snap.vocab);
  const KnowledgeMatrix km = build_knowledge_matrix(kb, se, cfg.m, cfg.source_set(), cfg.exact_cap);
  km.save(out);
  spdlog::info("selected M={} entries for {} codes from sources {}", cfg.m, km.codes.size(), km.sources);
}

void cmd_train(const DataPaths& data, const std::string& km_path, const std::string& out,
               const std::string& log_path, const TrainConfig& cfg) {
  const Corpus corpus = data.load();
  const SplitCorpora parts = split(corpus, load_splits(data.splits));
  const KnowledgeMatrix km = KnowledgeMatrix::load(km_path);
  const EncoderSnapshot snap = initial_encoder(cfg, parts.train);
  Model model = build_model(cfg, snap, corpus.labels, km);
  std::string log;
  TrainResult res = train(cfg, std::move(model), parts.train, parts.dev, [&](const EpochLog& e) {
    spdlog::info("epoch {} loss {:.6f}{}", e.epoch, e.train_loss,
                 e.dev_micro_f1 ? fmt::format(" dev micro-F1 {:.4f}", *e.dev_micro_f1) : "");
    log += e.to_json(false).dump() + "\n";
  });
  Checkpoint ckpt{std::move(res.model), cfg,        cfg.hash(), km.config_hash,
                  res.threshold,        res.label_thresholds, res.best_epoch};
  save_checkpoint(ckpt, out);
  if (!log_path.empty()) write_file_atomic(log_path, log);
  spdlog::info("best epoch {}, threshold {}", res.best_epoch, res.threshold);
}

Corpus select_split(const DataPaths& data, const LabelSpace& labels, const std::string& which) {
  std::optional<LabelSpace> ls = labels;
  Corpus corpus = load_corpus(data.corpus, ls);
  if (which == "all") return corpus;
  if (data.splits.empty()) throw ConfigError("--split " + which + " needs --splits");
  const SplitCorpora parts = split(corpus, load_splits(data.splits));
  switch (parse_split(which)) {
    case Split::kTrain: return parts.train;
    case Split::kDev: return parts.dev;
    case Split::kTest: return parts.test;
  }
  return corpus;
}

void cmd_evaluate(const DataPaths& data, const std::string& ckpt_path, const std::string& which,
                  const std::string& ns_csv, const std::string& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Corpus corpus = select_split(data, ckpt.model.labels(), which);
  const auto ns = parse_ns(ns_csv, ckpt.model.labels().size());
  const MetricsReport rep =
      evaluate(ckpt.model, corpus, ckpt.threshold, ns, ckpt.config_hash, ckpt.label_thresholds);
  const std::string body = rep.to_json().dump(2) + "\n";
  if (out.empty()) std::cout << body;
  else write_file_atomic(out, body);
}

void cmd_predict(const DataPaths& data, const std::string& ckpt_path, const std::string& which,
                 const std::string& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Corpus corpus = select_split(data, ckpt.model.labels(), which);
  const LabelSpace& labels = ckpt.model.labels();
  std::string body;
  for (const auto& doc : corpus.docs) {
    const Prediction p = predict(ckpt.model, doc, ckpt.model.vocab().hash());
    Json scores = Json::object();
    Json predicted = Json::array();
    for (std::size_t l = 0; l < labels.size(); ++l) {
      const double s = p.scores(static_cast<Eigen::Index>(l));
      scores[labels.code(l)] = s;
      const double t = ckpt.label_thresholds.empty() ? ckpt.threshold : ckpt.label_thresholds[l];
      if (s >= t) predicted.push_back(labels.code(l));
    }
    body += Json{{"id", doc.id}, {"predicted", predicted}, {"scores", scores}}.dump() + "\n";
  }
  if (out.empty()) std::cout << body;
  else write_file_atomic(out, body);
}

struct TraceArgs {
  std::string checkpoint;
  std::string km;
  std::vector<std::string> doc_ids;
  std::string out_dir;
  std::optional<double> threshold;
  int top_k_spans = 3;
  int top_k_knowledge = 8;
};

void cmd_trace(const DataPaths& data, const TraceArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const KnowledgeMatrix km = KnowledgeMatrix::load(a.km, ckpt.knowledge_hash);
  const Corpus corpus = select_split(data, ckpt.model.labels(), "all");
  std::vector<const Document*> docs;
  if (a.doc_ids.empty())
    for (const auto& d : corpus.docs) docs.push_back(&d);
  else
    for (const auto& id : a.doc_ids) docs.push_back(&find_doc(corpus, id));

  TraceOptions opts;
  opts.threshold = a.threshold.value_or(ckpt.threshold);
  if (!a.threshold) opts.label_thresholds = ckpt.label_thresholds;
  opts.top_k_spans = a.top_k_spans;
  opts.top_k_knowledge = a.top_k_knowledge;
  opts.model_id = ckpt.config_hash;
  const fs::path dir(a.out_dir);
  for (const Document* d : docs) {
    const Prediction p = predict(ckpt.model, *d, ckpt.model.vocab().hash());
    const TraceReport rep = build_trace(p, ckpt.model, km, opts);
    render_report(rep, ReportFormat::kStructured, dir / (d->id + ".trace.json"));
    render_report(rep, ReportFormat::kReadable, dir / (d->id + ".trace.html"));
  }
  spdlog::info("wrote {} trace reports to {}", docs.size(), a.out_dir);
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_st("kgc");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Knowledge-grounded multi-label ICD coding with traceable evidence"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string level = "info";
  app.add_option("--log-level", level, "trace, debug, info, warn, error or off");

  Overrides ov;
  DataPaths data;

  auto* prep = app.add_subcommand("prepare-data", "Validate a corpus and write its splits");
  std::string prep_out;
  ov.attach(prep);
  data.attach(prep, true);
  prep->add_option("--out", prep_out, "Output directory")->required();

  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic corpus with knowledge files");
  SyntheticConfig sc;
  std::string gen_out;
  ov.attach(gen);
  gen->add_option("--n-docs", sc.n_docs, "Documents")->capture_default_str();
  gen->add_option("--n-labels", sc.n_labels, "Labels")->capture_default_str();
  gen->add_option("--vocab-size", sc.vocab_size, "Word list size")->capture_default_str();
  gen->add_option("--signature-size", sc.signature_size, "Signature tokens per label")->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->required();

  auto* kb = app.add_subcommand("build-kb", "Merge knowledge sources into a knowledge base");
  KbArgs kb_args;
  ov.attach(kb);
  kb->add_option("--labels", kb_args.labels, "Label space file")->required()->check(CLI::ExistingFile);
  kb->add_option("--synonyms", kb_args.synonyms, "Synonym file {code, synonyms}")->check(CLI::ExistingFile);
  kb->add_option("--knowledge", kb_args.knowledge, "Knowledge export files (repeatable)")->check(CLI::ExistingFile);
  kb->add_option("--wikipedia-titles", kb_args.wikipedia_titles, "Code to page title map {code, title}")
      ->check(CLI::ExistingFile);
  kb->add_option("--wikipedia-config", kb_args.wikipedia_config, "Wikipedia client config JSON")
      ->check(CLI::ExistingFile);
  kb->add_option("--llm-config", kb_args.llm_config, "LLM client config JSON")->check(CLI::ExistingFile);
  kb->add_option("--cache-dir", kb_args.cache_dir, "Fetch cache directory")->capture_default_str();
  kb->add_option("--out", kb_args.out, "Knowledge base output")->required();

  auto* sel = app.add_subcommand("select-knowledge", "Select M diverse entries per code");
  std::string sel_kb, sel_out;
  ov.attach(sel);
  data.attach(sel, true);
  sel->add_option("--kb", sel_kb, "Knowledge base")->required()->check(CLI::ExistingFile);
  sel->add_option("--out", sel_out, "Knowledge matrix output")->required();

  auto* tr = app.add_subcommand("train", "Train a model");
  std::string tr_km, tr_out, tr_log;
  ov.attach(tr);
  data.attach(tr, true);
  tr->add_option("--knowledge-matrix", tr_km, "Knowledge matrix")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", tr_out, "Checkpoint output")->required();
  tr->add_option("--log", tr_log, "Per-epoch log (JSON lines)");

  auto* ev = app.add_subcommand("evaluate", "Score a split and write the metrics report");
  std::string ev_ckpt, ev_split = "test", ev_ns, ev_out;
  ov.attach(ev);
  data.attach(ev, false);
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", ev_split, "train, dev, test or all")->capture_default_str();
  ev->add_option("--p-at", ev_ns, "Comma-separated N for precision@N (default 5,8,15 up to L_n)");
  ev->add_option("--out", ev_out, "Report path (stdout when omitted)");

  auto* pr = app.add_subcommand("predict", "Write per-document scores and predicted codes");
  std::string pr_ckpt, pr_split = "all", pr_out;
  ov.attach(pr);
  data.attach(pr, false);
  pr->add_option("--checkpoint", pr_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  pr->add_option("--split", pr_split, "train, dev, test or all")->capture_default_str();
  pr->add_option("--out", pr_out, "Output path (stdout when omitted)");

  auto* tc = app.add_subcommand("trace", "Write evidence reports (JSON and HTML) per document");
  TraceArgs ta;
  ov.attach(tc);
  data.attach(tc, false);
  tc->add_option("--checkpoint", ta.checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
  tc->add_option("--knowledge-matrix", ta.km, "Knowledge matrix used in training")
      ->required()
      ->check(CLI::ExistingFile);
  tc->add_option("--doc-id", ta.doc_ids, "Documents to trace (default: all)");
  tc->add_option("--threshold", ta.threshold, "Override the checkpoint threshold");
  tc->add_option("--top-k-spans", ta.top_k_spans, "Spans per mechanism")->capture_default_str();
  tc->add_option("--top-k-knowledge", ta.top_k_knowledge, "Knowledge entries per code")->capture_default_str();
  tc->add_option("--out-dir", ta.out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(level));
    const TrainConfig cfg = ov.resolve();
    if (*prep) cmd_prepare(data, prep_out);
    else if (*gen) {
      if (ov.seed) sc.seed = *ov.seed;
      cmd_gen_synthetic(sc, gen_out);
    } else if (*kb) cmd_build_kb(kb_args, cfg);
    else if (*sel) cmd_select(data, sel_kb, sel_out, cfg);
    else if (*tr) cmd_train(data, tr_km, tr_out, tr_log, cfg);
    else if (*ev) cmd_evaluate(data, ev_ckpt, ev_split, ev_ns, ev_out);
    else if (*pr) cmd_predict(data, pr_ckpt, pr_split, pr_out);
    else if (*tc) cmd_trace(data, ta);
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
