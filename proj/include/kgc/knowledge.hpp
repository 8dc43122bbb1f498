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

// Per-code knowledge entries from three sources: pre-extracted UMLS synonyms,
// Wikipedia summaries and LLM-generated descriptions.

#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kgc/corpus.hpp"
#include "kgc/error.hpp"
#include "kgc/io.hpp"

namespace kgc {

enum class Source { kUmls, kWikipedia, kLlm };
std::string_view to_string(Source s);
Source parse_source(std::string_view s);

using SourceSet = std::set<Source>;
/// Parses "umls,wikipedia,llm" (any order, no duplicates required).
SourceSet parse_sources(std::string_view csv);
std::string to_string(const SourceSet& s);

struct KnowledgeEntry {
  std::string code;
  Source source = Source::kUmls;
  std::string text;
  std::string provenance;

  auto key() const { return std::tie(code, source, text); }
  bool operator==(const KnowledgeEntry& o) const {
    return key() == o.key() && provenance == o.provenance;
  }
};

Json to_json(const KnowledgeEntry& e);
KnowledgeEntry entry_from_json(const Json& j);

/// Keeps letters, digits, spaces, hyphens and parentheses; drops standalone
/// "and"/"or" (any case); collapses whitespace. nullopt means drop the entry.
std::optional<std::string> preprocess_synonym(std::string_view text);

/// Splits on '.', '!' or '?' followed by whitespace or end of text. Sentences
/// longer than max_tokens whitespace tokens are cut into max_tokens pieces.
std::vector<std::string> split_sentences(std::string_view text, std::size_t max_tokens = 64);

struct UmlsLoadResult {
  std::vector<KnowledgeEntry> entries;
  std::size_t skipped_codes = 0;
  std::size_t dropped_synonyms = 0;
};

/// Reads {"code": str, "synonyms": [str]} lines.
UmlsLoadResult load_umls_synonyms(const std::filesystem::path& path, const LabelSpace& labels);

/// Reads KB-export lines ({"code","source","text","provenance"}).
std::vector<KnowledgeEntry> load_knowledge_entries(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Remote clients

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Network failure (connect, timeout, reset). HTTP error statuses are not
/// exceptions; they come back in HttpResponse::status.
class TransportError : public Error {
 public:
  using Error::Error;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse get(const std::string& url, double timeout_s) = 0;
  virtual HttpResponse post_json(const std::string& url, const std::string& body,
                                 const std::vector<std::pair<std::string, std::string>>& headers,
                                 double timeout_s) = 0;
};

/// cpp-httplib backed transport (http and https).
class HttplibTransport final : public HttpTransport {
 public:
  HttpResponse get(const std::string& url, double timeout_s) override;
  HttpResponse post_json(const std::string& url, const std::string& body,
                         const std::vector<std::pair<std::string, std::string>>& headers,
                         double timeout_s) override;
};

struct ClientConfig {
  std::string endpoint;
  std::string api_key_env;
  double timeout_s = 30.0;
  int retries = 2;
  int concurrency = 4;
  std::string model;
  double temperature = 0.0;
  int max_tokens = 512;
  std::string prompt_template_path;

  /// Unknown keys raise ConfigError naming the key.
  static ClientConfig from_json(const Json& j);
};

/// On-disk key/value store; one file per key, written atomically. Writes to
/// the same key are serialised.
class DiskCache {
 public:
  explicit DiskCache(std::filesystem::path dir);
  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, std::string_view value);
  std::filesystem::path path_for(const std::string& key) const;

 private:
  std::mutex& lock_for(const std::string& key);

  std::filesystem::path dir_;
  std::mutex table_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

class WikipediaClient {
 public:
  static constexpr std::string_view kDefaultEndpoint = "https://en.wikipedia.org/api/rest_v1";

  WikipediaClient(ClientConfig cfg, HttpTransport& transport, DiskCache& cache);

  /// Sentence entries from the page summary. A missing page yields an empty
  /// list and increments misses(); exhausted retries throw FetchError.
  std::vector<KnowledgeEntry> fetch(const std::string& code, const std::string& title);

  static std::string cache_key(const std::string& title);
  std::size_t misses() const { return misses_; }
  std::size_t network_calls() const { return network_calls_; }

 private:
  ClientConfig cfg_;
  HttpTransport& transport_;
  DiskCache& cache_;
  std::atomic<std::size_t> misses_{0};
  std::atomic<std::size_t> network_calls_{0};
};

class LlmClient {
 public:
  static constexpr std::string_view kDefaultTemplate =
      "List the clinical definition, typical symptoms, and characteristic laboratory "
      "findings for ICD code {code} ({description}). Answer in short factual sentences.";

  /// Throws ConfigError if the template lacks {code} or {description}.
  LlmClient(ClientConfig cfg, std::string prompt_template, HttpTransport& transport,
            DiskCache& cache);

  std::vector<KnowledgeEntry> fetch(const std::string& code, const std::string& description);

  std::string render_prompt(const std::string& code, const std::string& description) const;
  std::string cache_key(const std::string& code) const;
  const std::string& template_hash() const { return template_hash_; }
  std::size_t network_calls() const { return network_calls_; }

 private:
  ClientConfig cfg_;
  std::string template_;
  std::string template_hash_;
  HttpTransport& transport_;
  DiskCache& cache_;
  std::atomic<std::size_t> network_calls_{0};
};

/// Runs fn(i) for i in [0, n) with at most `concurrency` tasks in flight.
/// Results keep index order; the first exception is rethrown.
void run_bounded(std::size_t n, int concurrency, const std::function<void(std::size_t)>& fn);

// ---------------------------------------------------------------------------
// Knowledge base

struct SourceCounts {
  std::size_t umls = 0;
  std::size_t wikipedia = 0;
  std::size_t llm = 0;
  std::size_t fallback = 0;
  std::size_t of(Source s) const;
};

class KnowledgeBase {
 public:
  static constexpr std::string_view kFallbackProvenance = "label-space:description";

  /// Entries of a code in canonical (source, text) order.
  const std::vector<KnowledgeEntry>& entries(const std::string& code) const;
  const std::vector<std::string>& codes() const { return codes_; }
  const SourceCounts& counts(const std::string& code) const;
  std::size_t total() const;
  bool has_source(const std::string& code, Source s) const;

  /// Every entry in label-space order, then (source, text).
  std::vector<KnowledgeEntry> all() const;

  void save(const std::filesystem::path& path) const;
  static KnowledgeBase load(const std::filesystem::path& path, const LabelSpace& labels);

  friend KnowledgeBase build_kb(const LabelSpace&, const SourceSet&,
                                const std::map<Source, std::vector<KnowledgeEntry>>&);

 private:
  std::vector<std::string> codes_;
  std::map<std::string, std::vector<KnowledgeEntry>> by_code_;
  std::map<std::string, SourceCounts> counts_;
};

/// Merges the inputs of the requested sources, deduplicates on
/// (code, source, text), and injects each code's description as a fallback
/// umls entry. A requested source with no input entry raises ConfigError.
KnowledgeBase build_kb(const LabelSpace& labels, const SourceSet& sources,
                       const std::map<Source, std::vector<KnowledgeEntry>>& inputs);

}  // namespace kgc
