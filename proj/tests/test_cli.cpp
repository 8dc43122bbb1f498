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

#include "catch_amalgamated.hpp"
#include "cli_runner.hpp"
#include "kgc/diversity.hpp"
#include "kgc/metrics.hpp"
#include "kgc/trace.hpp"
#include "support.hpp"

using namespace kgc;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

TrainConfig small_config() {
  TrainConfig c = testing::smoke_config();
  c.d = 16;
  c.ff = 32;
  c.m = 8;
  c.conv_filters = 4;
  c.epochs = 2;
  c.chunk_size = 24;
  c.max_length = 48;
  return c;
}

// The small pipeline is shared by several cases.
const fs::path& pipeline_dir() {
  static const fs::path dir = [] {
    const fs::path d = testing::temp_dir("cli_pipeline");
    const testing::CliResult r = testing::run_pipeline(d, small_config(), 16, 5, 60);
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    return d;
  }();
  return dir;
}

std::vector<std::string> data_args(const fs::path& dir) {
  const std::string data = (dir / "data").string();
  return {"--corpus", data + "/corpus.jsonl", "--labels", data + "/labels.jsonl", "--splits",
          data + "/splits.jsonl"};
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  const fs::path dir = testing::temp_dir("cli_usage");
  CHECK(testing::run_cli({}, dir / "a.log").exit_code == 1);
  const auto unknown = testing::run_cli({"gen-synthetic", "--out", (dir / "x").string(), "--bogus"}, dir / "b.log");
  CHECK(unknown.exit_code == 1);
  CHECK_THAT(unknown.output, ContainsSubstring("--bogus"));
  CHECK(testing::run_cli({"train"}, dir / "c.log").exit_code == 1);
  CHECK(testing::run_cli({"--help"}, dir / "d.log").exit_code == 0);
  CHECK(testing::run_cli({"trace", "--help"}, dir / "e.log").output.find("--top-k-knowledge") != std::string::npos);
}

TEST_CASE("unknown config keys are named") {
  const fs::path dir = testing::temp_dir("cli_config");
  std::ofstream(dir / "c.json") << R"({"lr_rate": 0.1})";
  const auto r = testing::run_cli(
      {"gen-synthetic", "--config", (dir / "c.json").string(), "--out", (dir / "o").string()}, dir / "a.log");
  CHECK(r.exit_code == 1);
  CHECK_THAT(r.output, ContainsSubstring("lr_rate"));
  const auto s = testing::run_cli({"gen-synthetic", "--set", "epochz=3", "--out", (dir / "o").string()},
                                  dir / "b.log");
  CHECK(s.exit_code == 1);
  CHECK_THAT(s.output, ContainsSubstring("epochz"));
}

TEST_CASE("runtime failures exit with 2") {
  const fs::path dir = testing::temp_dir("cli_runtime");
  std::ofstream(dir / "plain") << "x";
  CHECK(testing::run_cli({"gen-synthetic", "--out", (dir / "plain" / "sub").string()}, dir / "a.log").exit_code == 2);
}

TEST_CASE("gen-synthetic is deterministic under a seed") {
  const fs::path dir = testing::temp_dir("cli_gen");
  for (const char* out : {"a", "b"})
    REQUIRE(testing::run_cli({"gen-synthetic", "--seed", "7", "--out", (dir / out).string()},
                             dir / (std::string(out) + ".log"))
                .exit_code == 0);
  REQUIRE(testing::run_cli({"gen-synthetic", "--seed", "8", "--out", (dir / "c").string()}, dir / "c.log")
              .exit_code == 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    ++files;
    CHECK(read_file(e.path()) == read_file(dir / "b" / e.path().filename()));
  }
  CHECK(files >= 6);
  CHECK(read_file(dir / "a" / "corpus.jsonl") != read_file(dir / "c" / "corpus.jsonl"));
}

TEST_CASE("prepare-data validates and writes splits") {
  const fs::path& dir = pipeline_dir();
  const fs::path out = testing::temp_dir("cli_prepare");
  const auto r = testing::run_cli(concat({"prepare-data", "--out", out.string()}, data_args(dir)), out / "a.log");
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  for (const char* f : {"labels.jsonl", "train.jsonl", "dev.jsonl", "test.jsonl"}) CHECK(fs::exists(out / f));
  std::ofstream(out / "bad.jsonl") << "{\"id\": 1}\n";
  CHECK(testing::run_cli({"prepare-data", "--corpus", (out / "bad.jsonl").string(), "--splits",
                          (dir / "data" / "splits.jsonl").string(), "--out", out.string()},
                         out / "b.log")
            .exit_code == 1);
}

TEST_CASE("select-knowledge records M and the source set") {
  const fs::path& dir = pipeline_dir();
  const KnowledgeMatrix km = KnowledgeMatrix::load(dir / "km.json");
  CHECK(km.m == 8);
  CHECK(km.sources == "umls,wikipedia,llm");
  CHECK(km.codes.size() == 5);
  for (const auto& ck : km.codes) CHECK(ck.rows.rows() == 8);

  const fs::path out = testing::temp_dir("cli_select");
  const auto r = testing::run_cli(
      concat({"select-knowledge", "--m", "2", "--sources", "umls", "--kb", (dir / "kb.jsonl").string(), "--out",
              (out / "km.json").string()},
             data_args(dir)),
      out / "a.log");
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  const KnowledgeMatrix small = KnowledgeMatrix::load(out / "km.json");
  CHECK(small.m == 2);
  CHECK(small.sources == "umls");
  CHECK(small.config_hash != km.config_hash);
}

TEST_CASE("train, evaluate, predict and trace outputs") {
  const fs::path& dir = pipeline_dir();
  const Json report = Json::parse(read_file(dir / "report.json"));
  CHECK(report.contains("micro_f1"));
  CHECK(report.contains("p_at_5"));
  CHECK_FALSE(report.contains("p_at_8"));
  CHECK(read_file(dir / "train_log.jsonl").find("dev_micro_f1") != std::string::npos);

  const fs::path out = testing::temp_dir("cli_outputs");
  const auto p = testing::run_cli(concat({"predict", "--checkpoint", (dir / "model.json").string(), "--out",
                                          (out / "pred.jsonl").string()},
                                         data_args(dir)),
                                  out / "p.log");
  INFO(p.output);
  REQUIRE(p.exit_code == 0);
  const auto lines = read_lines(out / "pred.jsonl");
  CHECK(lines.size() == 16);
  const Json first = Json::parse(lines.front());
  CHECK(first["scores"].size() == 5);

  const auto t = testing::run_cli(concat({"trace", "--checkpoint", (dir / "model.json").string(), "--knowledge-matrix",
                                          (dir / "km.json").string(), "--doc-id", first["id"].get<std::string>(),
                                          "--threshold", "0", "--out-dir", (out / "trace").string()},
                                         data_args(dir)),
                                  out / "t.log");
  INFO(t.output);
  REQUIRE(t.exit_code == 0);
  const fs::path json = out / "trace" / (first["id"].get<std::string>() + ".trace.json");
  REQUIRE(fs::exists(json));
  CHECK(fs::exists(out / "trace" / (first["id"].get<std::string>() + ".trace.html")));
  const TraceReport tr = TraceReport::from_json(Json::parse(read_file(json)));
  CHECK(tr.codes.size() == 5);
  CHECK(tr.model_id == load_checkpoint(dir / "model.json").config_hash);

  const fs::path other = testing::temp_dir("cli_other_km");
  REQUIRE(testing::run_cli(concat({"select-knowledge", "--m", "2", "--kb", (dir / "kb.jsonl").string(), "--out",
                                   (other / "km.json").string()},
                                  data_args(dir)),
                           other / "a.log")
              .exit_code == 0);
  const auto mismatch = testing::run_cli(
      concat({"trace", "--checkpoint", (dir / "model.json").string(), "--knowledge-matrix",
              (other / "km.json").string(), "--out-dir", (other / "t").string()},
             data_args(dir)),
      other / "b.log");
  CHECK(mismatch.exit_code == 1);
}

TEST_CASE("ablation flags compose") {
  const fs::path& dir = pipeline_dir();
  const fs::path out = testing::temp_dir("cli_ablation");
  const auto r = testing::run_cli(
      concat({"train", "--config", (dir / "config.json").string(), "--disable-kcca", "--disable-lcca",
              "--knowledge-matrix", (dir / "km.json").string(), "--out", (out / "m.json").string()},
             data_args(dir)),
      out / "a.log");
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  Checkpoint ck = load_checkpoint(out / "m.json");
  CHECK(ck.config.lsa);
  CHECK_FALSE(ck.config.lcca);
  CHECK_FALSE(ck.config.kcca);
  const std::string text = "some words to score";
  const Vector before = predict_scores(ck.model, text);
  std::mt19937_64 rng(1);
  AttentionParams& a = ck.model.attention();
  for (Param* p : {&a.lcca_q, &a.lcca_k, &a.lcca_v, &a.w4, &a.kcca_q, &a.kcca_k, &a.kcca_v, &a.wg})
    p->value = testing::random_matrix(p->value.rows(), p->value.cols(), rng);
  CHECK(predict_scores(ck.model, text) == before);
}
