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

#include "kgc/knowledge.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <future>
#include <sstream>

#include <spdlog/spdlog.h>

#include "kgc/error.hpp"

namespace kgc {

namespace fs = std::filesystem;

std::string_view to_string(Source s) {
  switch (s) {
    case Source::kUmls: return "umls";
    case Source::kWikipedia: return "wikipedia";
    case Source::kLlm: return "llm";
  }
  return "?";
}

Source parse_source(std::string_view s) {
  if (s == "umls") return Source::kUmls;
  if (s == "wikipedia") return Source::kWikipedia;
  if (s == "llm") return Source::kLlm;
  throw ConfigError("unknown knowledge source: " + std::string(s));
}

SourceSet parse_sources(std::string_view csv) {
  SourceSet out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    std::size_t end = csv.find(',', start);
    if (end == std::string_view::npos) end = csv.size();
    std::string_view item = csv.substr(start, end - start);
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.front())))
      item.remove_prefix(1);
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.back())))
      item.remove_suffix(1);
    if (!item.empty()) out.insert(parse_source(item));
    start = end + 1;
  }
  if (out.empty()) throw ConfigError("empty knowledge source list");
  return out;
}

std::string to_string(const SourceSet& s) {
  std::string out;
  for (Source x : s) {
    if (!out.empty()) out += ',';
    out += to_string(x);
  }
  return out;
}

Json to_json(const KnowledgeEntry& e) {
  return Json{{"code", e.code},
              {"source", std::string(to_string(e.source))},
              {"text", e.text},
              {"provenance", e.provenance}};
}

KnowledgeEntry entry_from_json(const Json& j) {
  KnowledgeEntry e;
  e.code = j.at("code").get<std::string>();
  e.source = parse_source(j.at("source").get<std::string>());
  e.text = j.at("text").get<std::string>();
  e.provenance = j.value("provenance", std::string());
  return e;
}

std::optional<std::string> preprocess_synonym(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '-' || c == '(' || c == ')' || c >= 0x80) {
      cleaned.push_back(ch);
    } else if (std::isspace(c)) {
      cleaned.push_back(' ');
    }
  }
  std::istringstream in(cleaned);
  std::string tok;
  std::string out;
  while (in >> tok) {
    std::string lower = tok;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "and" || lower == "or") continue;
    if (!out.empty()) out += ' ';
    out += tok;
  }
  if (out.empty()) return std::nullopt;
  return out;
}

std::vector<std::string> split_sentences(std::string_view text, std::size_t max_tokens) {
  std::vector<std::string> sentences;
  std::string cur;
  auto flush = [&] {
    std::istringstream in(cur);
    std::vector<std::string> toks;
    std::string t;
    while (in >> t) toks.push_back(t);
    cur.clear();
    for (std::size_t i = 0; i < toks.size(); i += max_tokens) {
      std::string piece;
      for (std::size_t j = i; j < std::min(toks.size(), i + max_tokens); ++j) {
        if (!piece.empty()) piece += ' ';
        piece += toks[j];
      }
      sentences.push_back(std::move(piece));
    }
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    cur.push_back(c);
    const bool terminal = c == '.' || c == '!' || c == '?';
    const bool boundary =
        i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]));
    if (terminal && boundary) flush();
  }
  flush();
  return sentences;
}

UmlsLoadResult load_umls_synonyms(const fs::path& path, const LabelSpace& labels) {
  UmlsLoadResult out;
  read_jsonl(path, [&](const Json& rec, std::size_t line) {
    if (!rec.contains("code") || !rec["code"].is_string() || !rec.contains("synonyms") ||
        !rec["synonyms"].is_array())
      throw ParseError(path.string(), line, "expected {\"code\": str, \"synonyms\": [str]}");
    const auto code = rec["code"].get<std::string>();
    if (!labels.contains(code)) {
      spdlog::warn("{}:{}: code {} not in label space, skipped", path.string(), line, code);
      ++out.skipped_codes;
      return;
    }
    for (const auto& s : rec["synonyms"]) {
      if (!s.is_string()) throw ParseError(path.string(), line, "non-string synonym");
      auto clean = preprocess_synonym(s.get<std::string>());
      if (!clean) {
        ++out.dropped_synonyms;
        continue;
      }
      out.entries.push_back({code, Source::kUmls, *clean, path.filename().string()});
    }
  });
  return out;
}

std::vector<KnowledgeEntry> load_knowledge_entries(const fs::path& path) {
  std::vector<KnowledgeEntry> out;
  read_jsonl(path, [&](const Json& rec, std::size_t line) {
    try {
      out.push_back(entry_from_json(rec));
    } catch (const Json::exception& e) {
      throw ParseError(path.string(), line, e.what());
    } catch (const ConfigError& e) {
      throw ParseError(path.string(), line, e.what());
    }
  });
  return out;
}

// ---------------------------------------------------------------------------

ClientConfig ClientConfig::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("client config must be an object");
  ClientConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "endpoint") c.endpoint = v.get<std::string>();
      else if (key == "api_key_env") c.api_key_env = v.get<std::string>();
      else if (key == "timeout_s") c.timeout_s = v.get<double>();
      else if (key == "retries") c.retries = v.get<int>();
      else if (key == "concurrency") c.concurrency = v.get<int>();
      else if (key == "model") c.model = v.get<std::string>();
      else if (key == "temperature") c.temperature = v.get<double>();
      else if (key == "max_tokens") c.max_tokens = v.get<int>();
      else if (key == "prompt_template_path") c.prompt_template_path = v.get<std::string>();
      else throw ConfigError("unknown client config key: " + key);
    } catch (const Json::exception&) {
      throw ConfigError("bad value for client config key: " + key);
    }
  }
  if (c.retries < 0) throw ConfigError("retries must be >= 0");
  if (c.concurrency < 1) throw ConfigError("concurrency must be >= 1");
  return c;
}

DiskCache::DiskCache(fs::path dir) : dir_(std::move(dir)) {}

fs::path DiskCache::path_for(const std::string& key) const {
  std::string name;
  for (char c : key) name.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  if (name.size() > 80) name.resize(80);
  return dir_ / (name + "-" + hash_hex(key).substr(0, 8) + ".json");
}

std::mutex& DiskCache::lock_for(const std::string& key) {
  std::lock_guard<std::mutex> g(table_mu_);
  auto& slot = locks_[key];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

std::optional<std::string> DiskCache::get(const std::string& key) const {
  const auto p = path_for(key);
  if (!fs::exists(p)) return std::nullopt;
  return read_file(p);
}

void DiskCache::put(const std::string& key, std::string_view value) {
  std::lock_guard<std::mutex> g(lock_for(key));
  write_file_atomic(path_for(key), value);
}

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string url_encode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~' || c == '(' ||
        c == ')') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 15]);
    }
  }
  return out;
}

template <typename Fn>
HttpResponse with_retries(const ClientConfig& cfg, const std::string& code,
                          const std::string& what, Fn&& call) {
  std::string last;
  for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
    try {
      HttpResponse r = call();
      if (r.status >= 500) {
        last = "HTTP " + std::to_string(r.status);
        continue;
      }
      return r;
    } catch (const TransportError& e) {
      last = e.what();
    }
  }
  throw FetchError(code, what + ": giving up after " + std::to_string(cfg.retries + 1) +
                             " attempts (" + last + ")");
}

}  // namespace

WikipediaClient::WikipediaClient(ClientConfig cfg, HttpTransport& transport, DiskCache& cache)
    : cfg_(std::move(cfg)), transport_(transport), cache_(cache) {
  if (cfg_.endpoint.empty()) cfg_.endpoint = std::string(kDefaultEndpoint);
}

std::string WikipediaClient::cache_key(const std::string& title) { return "wikipedia/" + title; }

std::vector<KnowledgeEntry> WikipediaClient::fetch(const std::string& code,
                                                   const std::string& title) {
  const std::string key = cache_key(title);
  Json rec;
  if (auto hit = cache_.get(key)) {
    rec = Json::parse(*hit);
  } else {
    std::string slug = title;
    std::replace(slug.begin(), slug.end(), ' ', '_');
    const std::string url = cfg_.endpoint + "/page/summary/" + url_encode(slug);
    ++network_calls_;
    HttpResponse r = with_retries(cfg_, code, "wikipedia title '" + title + "'",
                                  [&] { return transport_.get(url, cfg_.timeout_s); });
    rec = Json{{"title", title}, {"url", url}, {"fetched_at", utc_now()}, {"status", r.status}};
    if (r.status == 200) {
      Json body = Json::parse(r.body, nullptr, false);
      if (body.is_discarded() || !body.contains("extract"))
        throw FetchError(code, "malformed summary response for '" + title + "'");
      rec["extract"] = body["extract"];
    } else if (r.status != 404) {
      throw FetchError(code, "wikipedia returned HTTP " + std::to_string(r.status) +
                                 " for '" + title + "'");
    }
    cache_.put(key, rec.dump(2));
  }
  if (rec.value("status", 0) != 200) {
    spdlog::warn("wikipedia: no page for '{}' (code {})", title, code);
    ++misses_;
    return {};
  }
  std::vector<KnowledgeEntry> out;
  for (auto& s : split_sentences(rec["extract"].get<std::string>()))
    out.push_back({code, Source::kWikipedia, std::move(s), key});
  return out;
}

LlmClient::LlmClient(ClientConfig cfg, std::string prompt_template, HttpTransport& transport,
                     DiskCache& cache)
    : cfg_(std::move(cfg)),
      template_(std::move(prompt_template)),
      transport_(transport),
      cache_(cache) {
  if (template_.find("{code}") == std::string::npos)
    throw ConfigError("prompt template lacks the {code} placeholder");
  if (template_.find("{description}") == std::string::npos)
    throw ConfigError("prompt template lacks the {description} placeholder");
  template_hash_ = hash_hex(template_);
}

std::string LlmClient::render_prompt(const std::string& code,
                                     const std::string& description) const {
  std::string out = template_;
  auto replace_all = [&out](std::string_view from, const std::string& to) {
    for (std::size_t pos = out.find(from); pos != std::string::npos;
         pos = out.find(from, pos + to.size()))
      out.replace(pos, from.size(), to);
  };
  replace_all("{code}", code);
  replace_all("{description}", description);
  return out;
}

std::string LlmClient::cache_key(const std::string& code) const {
  return "llm/" + cfg_.model + "/" + template_hash_ + "/" + code;
}

std::vector<KnowledgeEntry> LlmClient::fetch(const std::string& code,
                                             const std::string& description) {
  const std::string key = cache_key(code);
  std::string text;
  if (auto hit = cache_.get(key)) {
    text = Json::parse(*hit).at("response").get<std::string>();
  } else {
    const std::string prompt = render_prompt(code, description);
    Json req{{"model", cfg_.model},
             {"messages", Json::array({Json{{"role", "user"}, {"content", prompt}}})},
             {"temperature", cfg_.temperature},
             {"max_tokens", cfg_.max_tokens}};
    std::vector<std::pair<std::string, std::string>> headers;
    if (!cfg_.api_key_env.empty()) {
      const char* key_value = std::getenv(cfg_.api_key_env.c_str());
      if (key_value == nullptr)
        throw ConfigError("environment variable " + cfg_.api_key_env + " is not set");
      headers.emplace_back("Authorization", std::string("Bearer ") + key_value);
    }
    ++network_calls_;
    HttpResponse r = with_retries(cfg_, code, "llm request", [&] {
      return transport_.post_json(cfg_.endpoint, req.dump(), headers, cfg_.timeout_s);
    });
    if (r.status != 200) throw FetchError(code, "llm provider returned HTTP " +
                                                    std::to_string(r.status) + ": " + r.body);
    Json body = Json::parse(r.body, nullptr, false);
    if (body.is_discarded()) throw FetchError(code, "llm provider returned malformed JSON");
    if (body.contains("error")) throw FetchError(code, "llm provider error: " + body["error"].dump());
    try {
      const auto& content = body.at("choices").at(0).at("message").at("content");
      text = content.is_string() ? content.get<std::string>() : std::string();
    } catch (const Json::exception&) {
      throw FetchError(code, "llm response lacks choices[0].message.content");
    }
    Json rec{{"model", cfg_.model},
             {"template_hash", template_hash_},
             {"code", code},
             {"request", req},
             {"response", text},
             {"fetched_at", utc_now()}};
    cache_.put(key, rec.dump(2));
  }
  std::vector<KnowledgeEntry> out;
  for (auto& s : split_sentences(text)) out.push_back({code, Source::kLlm, std::move(s), key});
  if (out.empty()) spdlog::warn("llm: empty response for code {}", code);
  return out;
}

void run_bounded(std::size_t n, int concurrency, const std::function<void(std::size_t)>& fn) {
  const std::size_t width = static_cast<std::size_t>(std::max(1, concurrency));
  for (std::size_t start = 0; start < n; start += width) {
    std::vector<std::future<void>> inflight;
    for (std::size_t i = start; i < std::min(n, start + width); ++i)
      inflight.push_back(std::async(std::launch::async, fn, i));
    std::exception_ptr first;
    for (auto& f : inflight) {
      try {
        f.get();
      } catch (...) {
        if (!first) first = std::current_exception();
      }
    }
    if (first) std::rethrow_exception(first);
  }
}

// ---------------------------------------------------------------------------

std::size_t SourceCounts::of(Source s) const {
  switch (s) {
    case Source::kUmls: return umls;
    case Source::kWikipedia: return wikipedia;
    case Source::kLlm: return llm;
  }
  return 0;
}

const std::vector<KnowledgeEntry>& KnowledgeBase::entries(const std::string& code) const {
  auto it = by_code_.find(code);
  if (it == by_code_.end()) throw ValidationError("no knowledge for code " + code);
  return it->second;
}

const SourceCounts& KnowledgeBase::counts(const std::string& code) const {
  auto it = counts_.find(code);
  if (it == counts_.end()) throw ValidationError("no knowledge for code " + code);
  return it->second;
}

std::size_t KnowledgeBase::total() const {
  std::size_t n = 0;
  for (const auto& [c, v] : by_code_) n += v.size();
  return n;
}

bool KnowledgeBase::has_source(const std::string& code, Source s) const {
  return counts(code).of(s) > 0;
}

std::vector<KnowledgeEntry> KnowledgeBase::all() const {
  std::vector<KnowledgeEntry> out;
  for (const auto& c : codes_) {
    const auto& v = by_code_.at(c);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

void KnowledgeBase::save(const fs::path& path) const {
  std::string out;
  for (const auto& e : all()) {
    out += to_json(e).dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

namespace {

void finalize(std::vector<KnowledgeEntry>& v, SourceCounts& counts) {
  std::sort(v.begin(), v.end(), [](const KnowledgeEntry& a, const KnowledgeEntry& b) {
    return std::tie(a.source, a.text, a.provenance) < std::tie(b.source, b.text, b.provenance);
  });
  v.erase(std::unique(v.begin(), v.end(),
                      [](const KnowledgeEntry& a, const KnowledgeEntry& b) {
                        return a.key() == b.key();
                      }),
          v.end());
  counts = {};
  for (const auto& e : v) {
    if (e.provenance == KnowledgeBase::kFallbackProvenance) {
      ++counts.fallback;
      continue;
    }
    switch (e.source) {
      case Source::kUmls: ++counts.umls; break;
      case Source::kWikipedia: ++counts.wikipedia; break;
      case Source::kLlm: ++counts.llm; break;
    }
  }
}

}  // namespace

KnowledgeBase KnowledgeBase::load(const fs::path& path, const LabelSpace& labels) {
  KnowledgeBase kb;
  kb.codes_ = labels.codes();
  for (const auto& c : kb.codes_) kb.by_code_[c];
  for (auto& e : load_knowledge_entries(path)) {
    if (!labels.contains(e.code))
      throw ValidationError("knowledge base names code outside the label space: " + e.code);
    kb.by_code_[e.code].push_back(std::move(e));
  }
  for (const auto& c : kb.codes_) {
    if (kb.by_code_[c].empty()) throw ValidationError("knowledge base has no entry for " + c);
    finalize(kb.by_code_[c], kb.counts_[c]);
  }
  return kb;
}

KnowledgeBase build_kb(const LabelSpace& labels, const SourceSet& sources,
                       const std::map<Source, std::vector<KnowledgeEntry>>& inputs) {
  for (Source s : sources)
    if (!inputs.count(s))
      throw ConfigError("knowledge source '" + std::string(to_string(s)) +
                        "' requested but no input supplied");
  KnowledgeBase kb;
  kb.codes_ = labels.codes();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    kb.by_code_[labels.code(i)].push_back({labels.code(i), Source::kUmls, labels.description(i),
                                           std::string(KnowledgeBase::kFallbackProvenance)});
  }
  std::size_t ignored = 0;
  for (const auto& [src, entries] : inputs) {
    if (!sources.count(src)) continue;
    for (const auto& e : entries) {
      if (e.source != src)
        throw ValidationError("entry for " + e.code + " tagged " +
                              std::string(to_string(e.source)) + " supplied as " +
                              std::string(to_string(src)) + " input");
      if (!labels.contains(e.code)) {
        ++ignored;
        continue;
      }
      if (e.text.empty()) continue;
      kb.by_code_[e.code].push_back(e);
    }
  }
  if (ignored) spdlog::warn("build_kb: ignored {} entries for codes outside the label space", ignored);
  for (const auto& c : kb.codes_) {
    finalize(kb.by_code_[c], kb.counts_[c]);
    const auto& n = kb.counts_[c];
    spdlog::debug("kb {}: umls={} wikipedia={} llm={} fallback={}", c, n.umls, n.wikipedia, n.llm,
                  n.fallback);
  }
  return kb;
}

}  // namespace kgc
