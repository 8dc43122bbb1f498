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

#include "kgc/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kgc/error.hpp"
#include "kgc/io.hpp"

namespace kgc {

namespace fs = std::filesystem;

namespace {

// Objective differences below this are treated as ties.
constexpr double kTieEps = 1e-12;

void check_problem(const Matrix& dis, int m) {
  if (m < 1) throw ConfigError("M must be >= 1");
  if (dis.rows() != dis.cols()) throw ShapeError("dissimilarity matrix must be square");
}

}  // namespace

double dissimilarity(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ShapeError("dissimilarity: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw Error("dissimilarity: zero-norm embedding");
  return 1.0 - a.dot(b) / (na * nb);
}

Matrix dissimilarity_matrix(std::span<const Vector> embeddings) {
  const auto n = static_cast<Eigen::Index>(embeddings.size());
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      d(i, j) = d(j, i) = dissimilarity(embeddings[static_cast<std::size_t>(i)],
                                        embeddings[static_cast<std::size_t>(j)]);
  return d;
}

double mdp_objective(const Matrix& dis, std::span<const int> subset) {
  double total = 0.0;
  for (std::size_t a = 0; a < subset.size(); ++a)
    for (std::size_t b = a + 1; b < subset.size(); ++b) total += dis(subset[a], subset[b]);
  return total;
}

std::vector<int> solve_mdp_exact(const Matrix& dis, int m, int cap) {
  check_problem(dis, m);
  const int n = static_cast<int>(dis.rows());
  if (n > cap)
    throw ConfigError("exact MDP solver is capped at N=" + std::to_string(cap) + " (got N=" +
                      std::to_string(n) + "); use solve_mdp_greedy");
  const int k = std::min(m, n);
  std::vector<int> cur(static_cast<std::size_t>(k));
  std::iota(cur.begin(), cur.end(), 0);
  if (k <= 1 || k == n) return cur;

  std::vector<int> best = cur;
  double best_obj = mdp_objective(dis, cur);
  // Lexicographic enumeration; only a strictly better objective replaces the
  // incumbent, so the first optimum found is the smallest index set.
  while (true) {
    int i = k - 1;
    while (i >= 0 && cur[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) break;
    ++cur[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j)
      cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
    const double obj = mdp_objective(dis, cur);
    if (obj > best_obj + kTieEps) {
      best_obj = obj;
      best = cur;
    }
  }
  return best;
}

std::vector<int> solve_mdp_greedy(const Matrix& dis, int m) {
  check_problem(dis, m);
  const int n = static_cast<int>(dis.rows());
  const int k = std::min(m, n);
  std::vector<int> chosen;
  if (k == n) {
    chosen.resize(static_cast<std::size_t>(n));
    std::iota(chosen.begin(), chosen.end(), 0);
    return chosen;
  }
  if (k == 1) return {0};

  int bi = 0;
  int bj = 1;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (dis(i, j) > dis(bi, bj) + kTieEps) {
        bi = i;
        bj = j;
      }
  chosen = {bi, bj};
  std::vector<char> in(static_cast<std::size_t>(n), 0);
  in[static_cast<std::size_t>(bi)] = in[static_cast<std::size_t>(bj)] = 1;
  Vector gain = dis.col(bi) + dis.col(bj);
  while (static_cast<int>(chosen.size()) < k) {
    int pick = -1;
    for (int i = 0; i < n; ++i) {
      if (in[static_cast<std::size_t>(i)]) continue;
      if (pick < 0 || gain(i) > gain(pick) + kTieEps) pick = i;
    }
    chosen.push_back(pick);
    in[static_cast<std::size_t>(pick)] = 1;
    gain += dis.col(pick);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<Vector> embed_entries(std::span<const KnowledgeEntry> entries,
                                  const SentenceEncoder& encoder) {
  std::vector<Vector> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    try {
      out.push_back(encoder.encode(e.text));
    } catch (const std::exception& ex) {
      throw Error("encoding knowledge entry '" + e.text + "' of " + e.code + ": " + ex.what());
    }
    if (out.back().size() != encoder.dim())
      throw ShapeError("encoder returned wrong dimension for '" + e.text + "'");
  }
  return out;
}

CodeKnowledge select_code_knowledge(const std::string& code,
                                    std::span<const KnowledgeEntry> candidates,
                                    const SentenceEncoder& encoder, int m, int exact_cap) {
  if (m < 1) throw ConfigError("M must be >= 1");
  if (candidates.empty()) throw ValidationError("no knowledge candidates for " + code);
  const auto emb = embed_entries(candidates, encoder);
  const Matrix dis = dissimilarity_matrix(emb);
  const auto n = static_cast<int>(candidates.size());
  const std::vector<int> pick =
      n <= exact_cap ? solve_mdp_exact(dis, m, exact_cap) : solve_mdp_greedy(dis, m);

  CodeKnowledge ck;
  ck.code = code;
  ck.candidate_ids = pick;
  for (int i : pick) ck.selected.push_back(candidates[static_cast<std::size_t>(i)]);
  ck.rows.resize(m, encoder.dim());
  for (int r = 0; r < m; ++r) {
    const int which = r % static_cast<int>(pick.size());
    ck.row_entry.push_back(which);
    ck.rows.row(r) = emb[static_cast<std::size_t>(pick[static_cast<std::size_t>(which)])];
  }
  ck.avg = ck.rows.colwise().mean().transpose();
  return ck;
}

std::string knowledge_config_hash(int m, const SourceSet& sources, const std::string& encoder_id) {
  return hash_hex("m=" + std::to_string(m) + ";sources=" + to_string(sources) +
                  ";encoder=" + encoder_id);
}

const CodeKnowledge& KnowledgeMatrix::at(const std::string& code) const {
  for (const auto& c : codes)
    if (c.code == code) return c;
  throw ValidationError("knowledge matrix has no code " + code);
}

Matrix KnowledgeMatrix::stacked_rows() const {
  Matrix out(static_cast<Eigen::Index>(codes.size()) * m, dim);
  for (std::size_t l = 0; l < codes.size(); ++l)
    out.middleRows(static_cast<Eigen::Index>(l) * m, m) = codes[l].rows;
  return out;
}

Matrix KnowledgeMatrix::stacked_avg() const {
  Matrix out(static_cast<Eigen::Index>(codes.size()), dim);
  for (std::size_t l = 0; l < codes.size(); ++l)
    out.row(static_cast<Eigen::Index>(l)) = codes[l].avg.transpose();
  return out;
}

namespace {

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ValidationError("ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

}  // namespace

void KnowledgeMatrix::save(const fs::path& path) const {
  Json j{{"format", "kgc.knowledge_matrix"},
         {"version", 1},
         {"m", m},
         {"dim", dim},
         {"config_hash", config_hash},
         {"encoder_id", encoder_id},
         {"sources", sources}};
  Json arr = Json::array();
  for (const auto& c : codes) {
    Json entries = Json::array();
    for (const auto& e : c.selected) entries.push_back(to_json(e));
    Json avg = Json::array();
    for (Eigen::Index i = 0; i < c.avg.size(); ++i) avg.push_back(c.avg(i));
    arr.push_back(Json{{"code", c.code},
                       {"entries", std::move(entries)},
                       {"entry_ids", c.candidate_ids},
                       {"row_entry", c.row_entry},
                       {"rows", matrix_to_json(c.rows)},
                       {"avg", std::move(avg)}});
  }
  j["codes"] = std::move(arr);
  write_file_atomic(path, j.dump());
}

KnowledgeMatrix KnowledgeMatrix::load(const fs::path& path, const std::string& expected_hash) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "kgc.knowledge_matrix")
    throw ValidationError(path.string() + ": not a knowledge-matrix file");
  KnowledgeMatrix km;
  km.m = j.at("m").get<int>();
  km.dim = j.at("dim").get<Eigen::Index>();
  km.config_hash = j.at("config_hash").get<std::string>();
  km.encoder_id = j.at("encoder_id").get<std::string>();
  km.sources = j.at("sources").get<std::string>();
  if (!expected_hash.empty() && expected_hash != km.config_hash)
    throw ConfigError("knowledge matrix " + path.string() + " was built with config hash " +
                      km.config_hash + ", expected " + expected_hash +
                      " (M, sources or encoder differ)");
  for (const auto& c : j.at("codes")) {
    CodeKnowledge ck;
    ck.code = c.at("code").get<std::string>();
    for (const auto& e : c.at("entries")) ck.selected.push_back(entry_from_json(e));
    ck.candidate_ids = c.at("entry_ids").get<std::vector<int>>();
    ck.row_entry = c.at("row_entry").get<std::vector<int>>();
    ck.rows = matrix_from_json(c.at("rows"), km.dim);
    const auto avg = c.at("avg").get<std::vector<double>>();
    ck.avg = Eigen::Map<const Vector>(avg.data(), static_cast<Eigen::Index>(avg.size()));
    km.codes.push_back(std::move(ck));
  }
  return km;
}

KnowledgeMatrix build_knowledge_matrix(const KnowledgeBase& kb, const SentenceEncoder& encoder,
                                       int m, const SourceSet& sources, int exact_cap) {
  KnowledgeMatrix km;
  km.m = m;
  km.dim = encoder.dim();
  km.encoder_id = encoder.id();
  km.sources = to_string(sources);
  km.config_hash = knowledge_config_hash(m, sources, km.encoder_id);
  for (const auto& code : kb.codes())
    km.codes.push_back(select_code_knowledge(code, kb.entries(code), encoder, m, exact_cap));
  return km;
}

}  // namespace kgc
