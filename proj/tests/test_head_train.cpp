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

#include <cmath>
#include <fstream>
#include <random>

#include "catch_amalgamated.hpp"
#include "kgc/metrics.hpp"
#include "kgc/model.hpp"
#include "kgc/train.hpp"
#include "support.hpp"

using namespace kgc;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

double micro_f1_direct(const Matrix& scores, const Matrix& gold, double t) {
  double tp = 0, fp = 0, fn = 0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    const bool p = scores.data()[i] >= t;
    const bool g = gold.data()[i] > 0.5;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  return tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
}

void require_small(const std::vector<testing::GradCheck>& checks, double tol) {
  for (const auto& c : checks) {
    INFO(c.name << " rel error " << c.rel_error);
    CHECK(c.rel_error < tol);
  }
}

std::vector<Param*> mutable_params(const std::vector<const Param*>& ps) {
  std::vector<Param*> out;
  for (const Param* p : ps) out.push_back(const_cast<Param*>(p));
  return out;
}

TrainConfig tiny_train_config() {
  TrainConfig c = testing::smoke_config();
  c.d = 16;
  c.ff = 32;
  c.m = 2;
  c.conv_filters = 4;
  c.epochs = 6;
  c.batch_size = 4;
  c.warmup_steps = 2;
  c.patience = 2;
  c.dropout = 0.1;
  return c;
}

SyntheticConfig tiny_data() {
  SyntheticConfig sc;
  sc.n_docs = 16;
  sc.n_labels = 5;
  sc.vocab_size = 60;
  sc.seed = 3;
  return sc;
}

}  // namespace

TEST_CASE("fuse stacks branches as channels") {
  std::mt19937_64 rng(1);
  Graph g(false);
  const Matrix a = testing::random_matrix(3, 4, rng), b = testing::random_matrix(3, 4, rng),
               c = testing::random_matrix(3, 4, rng);
  const std::array<Var, 3> reps{g.constant(a), g.constant(b), g.constant(c)};
  const Matrix all = fuse(g, reps, {}, 3, 4).value();
  CHECK(all.leftCols(4) == a);
  CHECK(all.middleCols(4, 4) == b);
  CHECK(all.rightCols(4) == c);
  const Matrix no_k = fuse(g, reps, {true, true, false}, 3, 4).value();
  CHECK(no_k.rightCols(4).isZero(0.0));
  CHECK(no_k.leftCols(4) == a);
  const Matrix only_lsa = fuse(g, {g.constant(a), Var{}, Var{}}, {true, false, false}, 3, 4).value();
  CHECK(only_lsa.rightCols(8).isZero(0.0));
  CHECK_THROWS_AS(fuse(g, reps, {false, false, false}, 3, 4), ConfigError);
}

TEST_CASE("forward_head shapes and the zero-input limit") {
  std::mt19937_64 rng(2);
  HeadParams h = HeadParams::init(8, 3, 0.01, rng);
  Graph g(false);
  const Matrix p = forward_head(g.constant(testing::random_matrix(50, 3 * 128, rng, -3, 3)), h, 128).value();
  CHECK(p.rows() == 50);
  CHECK(p.cols() == 1);
  CHECK((p.array() > 0.0).all());
  CHECK((p.array() < 1.0).all());
  h.conv1_b.value.setZero();
  h.conv2_b.value.setZero();
  const Matrix half = forward_head(g.constant(Matrix::Zero(4, 3 * 16)), h, 16).value();
  CHECK((half.array() == 0.5).all());
  CHECK_THROWS(HeadParams::init(8, 2, 0.01, rng));
}

TEST_CASE("bce loss examples") {
  Graph g(false);
  auto loss = [&](std::vector<double> p, std::vector<double> y) {
    return bce_loss(g.constant(Eigen::Map<Vector>(p.data(), static_cast<Eigen::Index>(p.size()))), y)
        .value()(0, 0);
  };
  CHECK(loss({1.0, 0.0, 1.0}, {1, 0, 1}) <= 1e-6);
  CHECK_THAT(loss({0.5, 0.5}, {1, 0}), WithinAbs(std::log(2.0), 1e-9));
  CHECK_THAT(loss({0.9, 0.2}, {1, 0}), WithinAbs(-(std::log(0.9) + std::log(0.8)) / 2, 1e-12));
  CHECK_THROWS_AS(loss({0.5}, {1, 0}), ShapeError);
}

TEST_CASE("head gradients match finite differences") {
  std::mt19937_64 rng(3);
  HeadParams h = HeadParams::init(5, 3, 0.01, rng);
  Param x("x", testing::random_matrix(4, 3 * 6, rng));
  const std::vector<double> y{1, 0, 0, 1};
  std::vector<Param*> ps = mutable_params(h.params());
  ps.push_back(&x);
  require_small(testing::check_gradients(ps, [&](Graph& g) {
    return bce_loss(forward_head(g.param(x), h, 6), y);
  }), 1e-4);
}

TEST_CASE("end-to-end gradients of the tiny model") {
  testing::TinyModel t = testing::tiny_model();
  REQUIRE(t.chunks.size() == 2);
  const auto params = t.model.trainable_params();
  CHECK(std::none_of(params.begin(), params.end(),
                     [&](const Param* p) { return p == &t.model.label_matrix(); }));
  require_small(testing::check_gradients(params, [&](Graph& g) { return testing::tiny_loss(g, t); }),
                1e-4);
}

TEST_CASE("a small step does not increase the batch loss") {
  testing::TinyModel t = testing::tiny_model(5);
  auto loss_now = [&] {
    Graph g(false);
    return testing::tiny_loss(g, t).value()(0, 0);
  };
  const double before = loss_now();
  CHECK(std::isfinite(before));
  CHECK(before >= 0.0);
  Adam opt(t.model.trainable_params());
  {
    Graph g(true);
    g.backward(testing::tiny_loss(g, t));
  }
  opt.step(1e-4);
  CHECK(loss_now() <= before);
}

TEST_CASE("disabled branches ignore their parameters") {
  const std::array<BranchSwitches, 3> cases{BranchSwitches{false, true, true},
                                            BranchSwitches{true, false, true},
                                            BranchSwitches{true, true, false}};
  std::mt19937_64 rng(6);
  for (std::size_t k = 0; k < 3; ++k) {
    testing::TinyModel t = testing::tiny_model();
    t.model.mutable_config().switches = cases[k];
    Graph g0(false);
    const Matrix before = forward(g0, t.model, t.chunks).probs.value();
    AttentionParams& a = t.model.attention();
    const std::vector<const Param*> branch =
        k == 0 ? a.lsa_params() : (k == 1 ? a.lcca_params() : a.kcca_params());
    for (Param* p : mutable_params(branch))
      p->value += testing::random_matrix(p->value.rows(), p->value.cols(), rng);
    Graph g1(false);
    CHECK(forward(g1, t.model, t.chunks).probs.value() == before);
    const auto trainable = t.model.trainable_params();
    for (const Param* p : branch) CHECK(std::find(trainable.begin(), trainable.end(), p) == trainable.end());
  }
}

TEST_CASE("threshold search examples") {
  const auto grid = default_threshold_grid();
  REQUIRE(grid.size() == 91);
  CHECK(grid.front() == 0.05);
  CHECK(grid.back() == 0.95);
  Matrix gold(2, 3), scores(2, 3);
  gold << 1, 0, 1, 0, 1, 0;
  scores = gold * 0.8 + Matrix::Constant(2, 3, 0.1);
  CHECK(optimize_threshold(scores, gold, grid) == 0.11);
  const Matrix all_pos = Matrix::Ones(2, 3);
  std::mt19937_64 rng(7);
  CHECK(optimize_threshold(testing::random_matrix(2, 3, rng, 0, 1), all_pos, grid) == 0.05);
  const std::vector<double> one{0.5};
  CHECK(optimize_threshold(scores, gold, one) == 0.5);
  CHECK_THROWS_AS(optimize_threshold(scores, gold, std::vector<double>{}), ConfigError);
}

TEST_CASE("threshold search returns a grid argmax") {
  std::mt19937_64 rng(8);
  const auto grid = default_threshold_grid();
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix scores = testing::random_matrix(6, 5, rng, 0, 1);
    Matrix gold = testing::random_matrix(6, 5, rng, 0, 1);
    gold = (gold.array() > 0.6).cast<double>();
    const double t = optimize_threshold(scores, gold, grid);
    const double f = micro_f1_direct(scores, gold, t);
    for (double u : grid) {
      CHECK(micro_f1_direct(scores, gold, u) <= f);
      if (u < t) CHECK(micro_f1_direct(scores, gold, u) < f);
    }
    const auto per_label = optimize_label_thresholds(scores, gold, grid);
    for (Eigen::Index l = 0; l < 5; ++l)
      for (double u : grid)
        CHECK(micro_f1_direct(scores.col(l), gold.col(l), u) <=
              micro_f1_direct(scores.col(l), gold.col(l), per_label[static_cast<std::size_t>(l)]));
  }
}

TEST_CASE("learning rate warms up and decays linearly") {
  CHECK(scheduled_lr(1.0, 0, 10, 110) == 0.0);
  CHECK_THAT(scheduled_lr(1.0, 5, 10, 110), WithinAbs(0.5, 1e-15));
  CHECK_THAT(scheduled_lr(1.0, 10, 10, 110), WithinAbs(1.0, 1e-15));
  CHECK_THAT(scheduled_lr(1.0, 60, 10, 110), WithinAbs(0.5, 1e-15));
  CHECK(scheduled_lr(1.0, 110, 10, 110) == 0.0);
  CHECK(scheduled_lr(2.0, 3, 0, 4) == 0.5);
}

TEST_CASE("train config keys are validated") {
  CHECK_THROWS_WITH(TrainConfig::from_json(Json{{"lr_rate", 0.1}}), ContainsSubstring("lr_rate"));
  CHECK_THROWS_WITH(TrainConfig::from_json(Json{{"epochs", "many"}}), ContainsSubstring("epochs"));
  TrainConfig c;
  c.set("lr", "0.001");
  c.set("sources", "umls,llm");
  c.set("lsa", "false");
  CHECK(c.lr == 0.001);
  CHECK(c.source_set() == SourceSet{Source::kUmls, Source::kLlm});
  CHECK_FALSE(c.lsa);
  CHECK(TrainConfig::from_json(c.to_json()).hash() == c.hash());
  CHECK(TrainConfig().hash() != c.hash());
  c.patience = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  TrainConfig none;
  none.lsa = none.lcca = none.kcca = false;
  CHECK_THROWS_AS(none.validate(), ConfigError);
  const TrainConfig table;
  CHECK(table.epochs == 20);
  CHECK(table.warmup_steps == 2000);
  CHECK(table.patience == 3);
  CHECK(table.chunk_size == 512);
  CHECK(table.max_length == 5120);
  CHECK(table.m == 8);
  CHECK(table.lr == 2e-5);
  CHECK(table.batch_size == 8);
}

TEST_CASE("checkpoints reproduce predictions") {
  testing::TinyModel t = testing::tiny_model();
  Checkpoint ck{t.model, TrainConfig{}, "cfg", "kh", 0.37, {}, 4};
  const auto dir = testing::temp_dir("ckpt");
  save_checkpoint(ck, dir / "m.json");
  const Checkpoint back = load_checkpoint(dir / "m.json");
  CHECK(back.threshold == 0.37);
  CHECK(back.best_epoch == 4);
  CHECK(back.knowledge_hash == "kh");
  const std::string text = "w1 w2 w3 w4 w5 w6 w7 w8 w9";
  CHECK(predict_scores(back.model, text) == predict_scores(t.model, text));
  std::ofstream(dir / "bad.json") << "{\"format\": \"other\"}";
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.json"), ValidationError);
}

TEST_CASE("training is deterministic and early stopping keeps the best epoch") {
  const TrainConfig cfg = tiny_train_config();
  const testing::SmokeRun run = testing::prepare_run(cfg, tiny_data(), "head_train_det");
  const TrainResult a = train(cfg, run.model, run.splits.train, run.splits.dev);
  const TrainResult b = train(cfg, run.model, run.splits.train, run.splits.dev);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].to_json(false) == b.log[i].to_json(false));
  CHECK(a.model.to_json() == b.model.to_json());

  double best = -1.0;
  int best_epoch = 0;
  for (const auto& e : a.log) {
    REQUIRE(e.dev_micro_f1.has_value());
    CHECK(std::isfinite(e.train_loss));
    if (*e.dev_micro_f1 > best) {
      best = *e.dev_micro_f1;
      best_epoch = e.epoch;
    }
  }
  CHECK(a.best_epoch == best_epoch);
  const int last = a.log.back().epoch;
  CHECK((last == cfg.epochs || last == best_epoch + cfg.patience));

  const Matrix scores = score_corpus(a.model, run.splits.dev);
  const Matrix gold = gold_matrix(run.splits.dev, run.model.labels());
  CHECK(micro_f1_direct(scores, gold, 0.5) == best);
  for (double u : cfg.threshold_grid) CHECK(micro_f1_direct(scores, gold, u) <= micro_f1_direct(scores, gold, a.threshold));
}

TEST_CASE("an empty dev split keeps the last epoch") {
  TrainConfig cfg = tiny_train_config();
  cfg.epochs = 2;
  const testing::SmokeRun run = testing::prepare_run(cfg, tiny_data(), "head_train_nodev");
  const TrainResult r = train(cfg, run.model, run.splits.train, Corpus{});
  CHECK(r.log.size() == 2);
  CHECK(r.best_epoch == 2);
  CHECK(r.threshold == 0.5);
  CHECK_FALSE(r.log[0].dev_micro_f1.has_value());
  CHECK_THROWS_AS(train(cfg, run.model, Corpus{}, run.splits.dev), ValidationError);
}
