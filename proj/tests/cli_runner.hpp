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

// Runs the command-line tool as a subprocess.

#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kgc/train.hpp"

#ifndef KGC_CLI_PATH
#error "KGC_CLI_PATH must name the kgc executable"
#endif

namespace kgc::testing {

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr combined
};

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

inline CliResult run_cli(const std::vector<std::string>& args, const std::filesystem::path& log) {
  std::string cmd = shell_quote(KGC_CLI_PATH);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " > " + shell_quote(log.string()) + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

/// gen-synthetic, build-kb, select-knowledge, train and evaluate under `dir`
/// with the given training config. Returns the first failing step's result,
/// or the evaluate result when every step succeeds.
inline CliResult run_pipeline(const std::filesystem::path& dir, const TrainConfig& cfg, int n_docs,
                              int n_labels, int vocab_size) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "config.json") << cfg.to_json().dump(2);
  }
  const std::string data = (dir / "data").string();
  const std::string conf = (dir / "config.json").string();
  const std::string seed = std::to_string(cfg.seed);
  const std::vector<std::vector<std::string>> steps{
      {"gen-synthetic", "--seed", seed, "--n-docs", std::to_string(n_docs), "--n-labels",
       std::to_string(n_labels), "--vocab-size", std::to_string(vocab_size), "--out", data},
      {"build-kb", "--config", conf, "--labels", data + "/labels.jsonl", "--synonyms",
       data + "/synonyms.jsonl", "--knowledge", data + "/knowledge.jsonl", "--out",
       (dir / "kb.jsonl").string()},
      {"select-knowledge", "--config", conf, "--corpus", data + "/corpus.jsonl", "--labels",
       data + "/labels.jsonl", "--splits", data + "/splits.jsonl", "--kb", (dir / "kb.jsonl").string(),
       "--out", (dir / "km.json").string()},
      {"train", "--config", conf, "--corpus", data + "/corpus.jsonl", "--labels", data + "/labels.jsonl",
       "--splits", data + "/splits.jsonl", "--knowledge-matrix", (dir / "km.json").string(), "--out",
       (dir / "model.json").string(), "--log", (dir / "train_log.jsonl").string()},
      {"evaluate", "--corpus", data + "/corpus.jsonl", "--labels", data + "/labels.jsonl", "--splits",
       data + "/splits.jsonl", "--checkpoint", (dir / "model.json").string(), "--split", "test", "--out",
       (dir / "report.json").string()},
  };
  CliResult r;
  int i = 0;
  for (const auto& step : steps) {
    r = run_cli(step, dir / ("step" + std::to_string(i++) + ".log"));
    if (r.exit_code != 0) return r;
  }
  return r;
}

}  // namespace kgc::testing
