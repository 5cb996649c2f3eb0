// Copyright 2026 The SER Lab Authors. All Rights Reserved.
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

#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "serlab/pipelines.hpp"

using namespace serlab;
using namespace serlab::pipelines;

namespace {

struct Trained {
  Checkpoint ckpt;
  std::vector<nlohmann::json> log;
};

Trained run(const TrainConfig& cfg, const CorpusSet& corpora, const Checkpoint* init = nullptr) {
  features::FeatureStore fs(testing::tiny_corpus().manifest_path.parent_path());
  Trained t;
  RunOptions opts;
  opts.on_log = [&](const nlohmann::json& j) { t.log.push_back(j); };
  t.ckpt = train(cfg, corpora, fs, init, opts);
  return t;
}

bool same_values(const Store& a, const Store& b) {
  if (a.names() != b.names()) return false;
  for (const auto& e : a.entries())
    if (!(e.value == b.value(e.name))) return false;
  return true;
}

std::size_t count_kind(const std::vector<nlohmann::json>& log, const std::string& kind) {
  std::size_t n = 0;
  for (const auto& j : log) n += j.value("kind", "") == kind;
  return n;
}

}  // namespace

TEST_SUITE("pipelines") {

TEST_CASE("early stopping rule") {
  auto up = early_stop({0.1, 0.2, 0.3, 0.4}, 3);
  CHECK_FALSE(up.stop);
  CHECK(up.best_epoch == 3);
  auto flat = early_stop({0.5, 0.5, 0.5, 0.5}, 3);
  CHECK(flat.stop);
  CHECK(flat.best_epoch == 0);
  CHECK_FALSE(early_stop({0.5, 0.5, 0.5}, 3).stop);
  auto walk = early_stop({0.5, 0.6, 0.59, 0.58, 0.57}, 3);
  CHECK(walk.stop);
  CHECK(walk.best_epoch == 1);
  CHECK_FALSE(early_stop({0.5, 0.6, 0.59, 0.58}, 3).stop);
  auto lower = early_stop({3.0, 2.0, 2.5, 2.1}, 2, false);
  CHECK(lower.stop);
  CHECK(lower.best_epoch == 1);
}

TEST_CASE("train config JSON round trip, strictness and hash") {
  auto c = TrainConfig::defaults(Mode::kByolMixed);
  CHECK(c.encoder.max_frames == 300);
  CHECK(TrainConfig::defaults(Mode::kContrastiveAdapt).encoder.max_frames == 400);
  c.constant_lambda = 0.25;
  c.variant_seed = 9;
  auto back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.hash() == c.hash());
  CHECK(c.hash().size() == 16);
  auto j = c.to_json();
  j["learning_rate"] = 0.1;
  CHECK_THROWS_AS(TrainConfig::from_json(j), std::invalid_argument);
  auto d = c;
  d.seed = 2;
  CHECK(d.hash() != c.hash());
  d.batch_size = 30;
  CHECK_THROWS(d.validate());
  CHECK(parse_mode("contrastive_adapt") == Mode::kContrastiveAdapt);
  CHECK_THROWS(parse_mode("simclr"));
}

TEST_CASE("mode-specific corpora are required") {
  auto corpora = testing::tiny_corpora();
  auto cfg = testing::tiny_config(Mode::kByolMixed);
  auto missing = corpora;
  missing.lrl_unlabeled.clear();
  CHECK_THROWS_AS(validate_corpora(cfg, missing), std::invalid_argument);
  cfg.mode = Mode::kBaseline;
  CHECK_NOTHROW(validate_corpora(cfg, missing));
  auto no_hrl = corpora;
  no_hrl.hrl_labeled.clear();
  CHECK_THROWS_AS(validate_corpora(cfg, no_hrl), std::invalid_argument);
}

TEST_CASE("fold roles") {
  auto c = testing::tiny_corpora();
  CHECK_FALSE(c.hrl_labeled.empty());
  CHECK_FALSE(c.hrl_validation.empty());
  CHECK_FALSE(c.lrl_unlabeled.empty());
  CHECK_FALSE(c.lrl_eval.empty());
  for (const auto& r : c.hrl_labeled) CHECK(r.language == "hrl");
  for (const auto& r : c.lrl_eval) CHECK(r.language != "hrl");
  CHECK(c.lrl_eval.front().session == c.hrl_validation.front().session);
}

TEST_CASE("baseline: step log, best checkpoint, determinism, round trip") {
  auto corpora = testing::tiny_corpora();
  auto cfg = testing::tiny_config(Mode::kBaseline, 3);
  auto a = run(cfg, corpora);
  CHECK(count_kind(a.log, "step") == 6);
  CHECK(count_kind(a.log, "epoch") == 2);
  double best = -1;
  for (const auto& h : a.ckpt.history) best = std::max(best, h.metric);
  CHECK(a.ckpt.best_metric == best);
  auto b = run(cfg, corpora);
  CHECK(same_values(a.ckpt.params, b.ckpt.params));

  auto dir = testing::scratch_dir("baseline_ckpt");
  save_checkpoint(dir, a.ckpt);
  auto loaded = load_checkpoint(dir);
  CHECK(same_values(loaded.params, a.ckpt.params));
  CHECK(loaded.config.hash() == cfg.hash());
  features::FeatureStore fs(testing::tiny_corpus().manifest_path.parent_path());
  CHECK(validation_metric(loaded, corpora, fs) == a.ckpt.best_metric);
}

TEST_CASE("tampered checkpoint config is rejected") {
  auto corpora = testing::tiny_corpora();
  auto cfg = testing::tiny_config(Mode::kBaseline, 4);
  cfg.max_epochs = 1;
  auto t = run(cfg, corpora);
  auto dir = testing::scratch_dir("tampered");
  save_checkpoint(dir, t.ckpt);
  std::ifstream in(dir / "checkpoint.json");
  auto j = nlohmann::json::parse(in);
  in.close();
  j["config"]["seed"] = 99;
  std::ofstream(dir / "checkpoint.json") << j.dump();
  CHECK_THROWS(load_checkpoint(dir));
}

TEST_CASE("contrastive adaptation ignores emotion labels and keeps the front end frozen") {
  auto corpora = testing::tiny_corpora();
  auto cfg = testing::tiny_config(Mode::kContrastiveAdapt, 5);
  auto a = run(cfg, corpora);
  auto permuted = corpora;
  for (auto& r : permuted.lrl_unlabeled) r.emotion = static_cast<Emotion>((static_cast<int>(*r.emotion) + 1) % 4);
  auto b = run(cfg, permuted);
  CHECK(same_values(a.ckpt.params, b.ckpt.params));
  CHECK(a.ckpt.metric_name == "val_ntxent");
  for (const auto& j : a.log)
    if (j.value("kind", "") == "step") CHECK(j.contains("ntxent"));

  RngStream rng = RngStream(cfg.seed).split("init");
  Store init;
  model::init_encoder(init, cfg.encoder, rng);
  for (const auto& e : init.entries())
    if (e.frozen) CHECK(a.ckpt.params.value(e.name) == e.value);
}

TEST_CASE("finetune starts from the stage-one encoder with a fresh head") {
  auto corpora = testing::tiny_corpora();
  auto cl = run(testing::tiny_config(Mode::kContrastiveAdapt, 6), corpora);
  auto cfg = testing::tiny_config(Mode::kFinetune, 6);
  auto ft = run(cfg, corpora, &cl.ckpt);
  for (const auto& e : cl.ckpt.params.entries())
    if (e.frozen) CHECK(ft.ckpt.params.value(e.name) == e.value);
  CHECK(ft.ckpt.params.contains("head.fc2.weight"));
  auto bad = cfg;
  bad.encoder.d_model = 8;
  bad.encoder.projector_hidden = 8;
  CHECK_THROWS(run(bad, corpora, &cl.ckpt));
}

TEST_CASE("byol_mixed logs the lambda schedule and stores the inference path") {
  auto corpora = testing::tiny_corpora();
  auto cfg = testing::tiny_config(Mode::kByolMixed, 7);
  cfg.encoder.max_frames = 100;
  cfg.patience = 10;
  auto t = run(cfg, corpora);
  std::vector<double> lambdas;
  for (const auto& j : t.log)
    if (j.value("kind", "") == "step") lambdas.push_back(j.at("lambda").get<double>());
  REQUIRE(lambdas.size() == 6);
  CHECK(lambdas.front() == 0.8);
  CHECK(lambdas.back() == 0.2);
  REQUIRE(t.ckpt.target);
  REQUIRE(t.ckpt.online);
  for (const auto& e : t.ckpt.params.entries()) {
    if (e.name.rfind("encoder.", 0) == 0) CHECK(e.value == t.ckpt.target->value(e.name));
    if (e.name.rfind("head.", 0) == 0) CHECK(e.value == t.ckpt.online->value(e.name));
  }
  auto dir = testing::scratch_dir("byol_ckpt");
  save_checkpoint(dir, t.ckpt);
  auto loaded = load_checkpoint(dir);
  features::FeatureStore fs(testing::tiny_corpus().manifest_path.parent_path());
  CHECK(validation_metric(loaded, corpora, fs) == t.ckpt.best_metric);
  CHECK(same_values(*loaded.target, *t.ckpt.target));
}

TEST_CASE("one mixed step: EMA recurrence and no gradient into the target") {
  model::EncoderConfig enc = testing::tiny_config(Mode::kByolMixed).encoder;
  RngStream rng(8);
  optim::OnlineTargetPair<float> pair;
  pair.online = make_byol_online(enc, rng);
  pair.target = pair.online.subset(steps::target_prefixes());
  pair.momentum = 0.9;
  const auto init_target = pair.target;
  steps::SupervisedBatch sup;
  sup.inputs = tensor::Tensor<float>({4, 100, 80});
  for (auto& v : sup.inputs.data) v = static_cast<float>(rng.uniform(-1, 1));
  sup.labels = {0, 1, 2, 3};
  tensor::Tensor<float> va({4, 100, 80}), vb({4, 100, 80});
  for (auto& v : va.data) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto& v : vb.data) v = static_cast<float>(rng.uniform(-1, 1));
  tensor::GradientMap<float> grads;
  auto stats = steps::byol_mixed_step(pair, enc, sup, va, vb, 0.5, {}, RngStream(1), &grads);
  CHECK(stats.mixed.has_value());
  CHECK(grads.count("predictor.fc1.weight") == 1);
  for (const auto& [name, g] : grads) CHECK(pair.online.contains(name));
  for (const auto& e : pair.target.entries()) {
    const auto& xi0 = init_target.value(e.name);
    const auto& theta = pair.online.value(e.name);
    for (std::size_t i = 0; i < e.value.size(); i += 97)
      CHECK(e.value.data[i] == doctest::Approx(0.9 * xi0.data[i] + 0.1 * theta.data[i]).epsilon(1e-6));
  }
  CHECK_FALSE(pair.target.contains("predictor.fc1.weight"));
  CHECK_FALSE(pair.target.contains("head.fc1.weight"));
}

TEST_CASE("exported embeddings equal eval-mode encoder outputs") {
  auto corpora = testing::tiny_corpora();
  auto cfg = testing::tiny_config(Mode::kBaseline, 9);
  cfg.max_epochs = 1;
  auto t = run(cfg, corpora);
  features::FeatureStore fs(testing::tiny_corpus().manifest_path.parent_path());
  fs.load(corpora.lrl_eval, false);
  auto path = testing::scratch_dir("export") / "emb.csv";
  export_embeddings(t.ckpt.params, cfg.encoder, corpora.lrl_eval, fs, path);
  auto emb = embed(t.ckpt.params, cfg.encoder, corpora.lrl_eval, fs);
  std::ifstream in(path);
  std::string line;
  std::size_t rows = 0;
  std::getline(in, line);
  CHECK(std::count(line.begin(), line.end(), ',') == 4 + 16 - 1);
  while (std::getline(in, line)) {
    auto first = line.find(',');
    for (int k = 0; k < 3; ++k) first = line.find(',', first + 1);
    CHECK(std::stof(line.substr(first + 1)) == emb.data[rows * 16]);
    ++rows;
  }
  CHECK(rows == corpora.lrl_eval.size());
}

}  // TEST_SUITE
