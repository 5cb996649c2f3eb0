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

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "serlab/cli.hpp"

using namespace serlab;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::cli_dispatch(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Compares with tests/snapshots/<name>; SERLAB_UPDATE_SNAPSHOTS=1 rewrites it.
void check_snapshot(const std::string& name, const std::string& text) {
  const fs::path path = fs::path(SERLAB_SNAPSHOT_DIR) / name;
  if (std::getenv("SERLAB_UPDATE_SNAPSHOTS")) {
    std::ofstream(path, std::ios::binary) << text;
    return;
  }
  REQUIRE_MESSAGE(fs::exists(path), "missing snapshot " << path.string());
  CHECK(read_file(path) == text);
}

fs::path write_experiment(const fs::path& dir) {
  const auto corpus = testing::tiny_corpus().manifest_path;
  nlohmann::json j = {
      {"data", {{"manifest", corpus.string()}}},
      {"train",
       {{"batch_size", 16},
        {"batches_per_epoch", 2},
        {"max_epochs", 1},
        {"patience", 1},
        {"validation_batches", 2},
        {"optimizer", {{"lr", 1e-3}}},
        {"encoder", {{"d_model", 16}, {"n_blocks", 1}, {"max_frames", 100}, {"projector_hidden", 16}, {"projector_dim", 8}}}}}};
  const auto path = dir / "experiment.json";
  std::ofstream(path) << j.dump(2);
  return path;
}

fs::path only_run_dir(const fs::path& out) {
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(out)) dirs.push_back(e.path());
  REQUIRE(dirs.size() == 1);
  return dirs.front();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help output matches snapshots") {
  auto top = run_cli({"--help"});
  CHECK(top.code == cli::kExitOk);
  check_snapshot("help.txt", top.out);
  for (const char* sub : {"gen-synth", "prepare", "train", "eval", "confusion-delta", "export-embeddings",
                          "augment-preview", "sweep"}) {
    auto r = run_cli({sub, "--help"});
    INFO(sub);
    CHECK(r.code == cli::kExitOk);
    check_snapshot(std::string("help_") + sub + ".txt", r.out);
  }
}

TEST_CASE("usage errors exit with the validation code") {
  auto missing = run_cli({"train", "--mode", "baseline", "--seed", "1", "--out", "x"});
  CHECK(missing.code == cli::kExitValidation);
  CHECK(missing.err.find("--config is required") != std::string::npos);
  CHECK(run_cli({"fly"}).code == cli::kExitValidation);
  CHECK(run_cli({"train", "--mode", "simclr", "--config", "c", "--seed", "1", "--out", "x"}).code ==
        cli::kExitValidation);
  auto dir = testing::scratch_dir("cli_errors");
  auto cfg = write_experiment(dir);
  auto init_misuse = run_cli({"train", "--mode", "baseline", "--config", cfg.string(), "--seed", "1", "--out",
                          (dir / "o").string(), "--init", "nowhere"});
  CHECK(init_misuse.code == cli::kExitValidation);
}

TEST_CASE("runtime failures exit with the runtime code") {
  auto dir = testing::scratch_dir("cli_runtime");
  auto r = run_cli({"eval", "--checkpoint", (dir / "absent").string(), "--manifest", (dir / "none.jsonl").string(),
                "--out", (dir / "o").string()});
  CHECK(r.code != cli::kExitOk);
}

TEST_CASE("prepare, train twice, eval, export and confusion-delta") {
  auto dir = testing::scratch_dir("cli_flow");
  auto prep = run_cli({"prepare", "--manifest", testing::tiny_corpus().manifest_path.string(), "--out",
                   (dir / "prep").string()});
  REQUIRE(prep.code == cli::kExitOk);
  CHECK(fs::exists(dir / "prep" / "fold0" / "manifest.jsonl"));
  CHECK(fs::exists(dir / "prep" / "fold4" / "manifest.jsonl"));

  auto cfg = write_experiment(dir);
  for (const char* out : {"a", "b"}) {
    auto t = run_cli({"train", "--mode", "baseline", "--config", cfg.string(), "--seed", "3", "--out",
                  (dir / out).string(), "--quiet"});
    REQUIRE_MESSAGE(t.code == cli::kExitOk, t.err);
  }
  const auto run_a = only_run_dir(dir / "a"), run_b = only_run_dir(dir / "b");
  CHECK(run_a.filename() == run_b.filename());
  for (const char* f : {"model.serk", "optimizer.serk", "checkpoint.json"})
    CHECK(read_file(run_a / "checkpoint" / f) == read_file(run_b / "checkpoint" / f));
  CHECK(fs::exists(run_a / "train.jsonl"));
  CHECK(fs::exists(run_a / "run.json"));

  const auto fold_manifest = (dir / "prep" / "fold0" / "manifest.jsonl").string();
  auto ev = run_cli({"eval", "--checkpoint", (run_a / "checkpoint").string(), "--manifest", fold_manifest, "--out",
                 (dir / "eval").string()});
  REQUIRE_MESSAGE(ev.code == cli::kExitOk, ev.err);
  for (const char* f : {"report.json", "report.txt", "gender.txt", "gender.json"})
    CHECK(fs::exists(dir / "eval" / f));

  auto ex = run_cli({"export-embeddings", "--checkpoint", (run_a / "checkpoint").string(), "--manifest",
                 fold_manifest, "--split", "all", "--out", (dir / "emb.csv").string()});
  REQUIRE_MESSAGE(ex.code == cli::kExitOk, ex.err);
  std::ifstream in(dir / "emb.csv");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == testing::tiny_corpus().records.size() + 1);

  const auto report = (dir / "eval" / "report.json").string();
  auto cd = run_cli({"confusion-delta", "--a", report, "--b", report, "--out", (dir / "delta").string()});
  REQUIRE_MESSAGE(cd.code == cli::kExitOk, cd.err);
  CHECK(cd.out.find("Truth\\Pred") != std::string::npos);
}

TEST_CASE("augment-preview writes the clean spectrogram and views") {
  auto dir = testing::scratch_dir("cli_preview");
  const auto& rec = testing::tiny_corpus().records.front();
  const auto audio = testing::tiny_corpus().manifest_path.parent_path() / rec.audio_path;
  auto r = run_cli({"augment-preview", "--audio", audio.string(), "--pipeline", "cl_adapt", "--out", dir.string()});
  REQUIRE_MESSAGE(r.code == cli::kExitOk, r.err);
  CHECK(fs::exists(dir / "clean.smat"));
  CHECK(fs::exists(dir / "view0.smat"));
}

}  // TEST_SUITE
