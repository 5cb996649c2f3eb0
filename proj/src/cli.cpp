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

#include "serlab/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "serlab/augment.hpp"
#include "serlab/config.hpp"
#include "serlab/experiment.hpp"
#include "serlab/features.hpp"
#include "serlab/pipelines.hpp"
#include "serlab/rng.hpp"

namespace serlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot read " + path.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::vector<UtteranceRecord> with_split(const std::vector<UtteranceRecord>& records, const std::string& split) {
  if (split == "all") return records;
  const auto want = parse_split(split);
  if (!want) throw std::invalid_argument("unknown split '" + split + "'");
  std::vector<UtteranceRecord> out;
  for (const auto& r : records)
    if (r.split == want) out.push_back(r);
  if (out.empty()) throw std::invalid_argument("manifest has no records in split '" + split + "'");
  return out;
}

eval::ConfusionMatrix confusion_from_json(const fs::path& path) {
  const json j = read_json(path);
  const json* c = nullptr;
  if (j.contains("confusion")) c = &j.at("confusion");
  if (!c) throw std::invalid_argument(path.string() + ": no 'confusion' field");
  auto m = c->get<eval::ConfusionMatrix>();
  if (m.size() != kNumEmotions) throw std::invalid_argument(path.string() + ": confusion must be 4x4");
  for (const auto& row : m)
    if (row.size() != kNumEmotions) throw std::invalid_argument(path.string() + ": confusion must be 4x4");
  return m;
}

struct Args {
  // gen-synth
  int n_speakers = 40, utterances = 25, sessions = 5;
  // shared
  std::uint64_t seed = 0;
  std::string out, config, manifest, checkpoint, split = "test", mode, init, audio, pipeline = "cl_adapt";
  std::string hrl_language = "hrl";
  std::size_t n_folds = 5;
  int fold = -1;
  double min_duration = 0.5, max_duration = 12.0;
  std::vector<std::string> a_reports, b_reports, models;
  std::vector<std::uint64_t> seeds;
  std::vector<std::size_t> folds;
  bool quiet = false;
};

int run_gen_synth(const Args& a, std::ostream& out) {
  SynthCorpusConfig c = SynthCorpusConfig::defaults();
  c.n_speakers = a.n_speakers;
  c.utterances_per_speaker = a.utterances;
  c.n_sessions = a.sessions;
  c.seed = a.seed;
  c.validate();
  const auto corpus = generate_synth_corpus(c, a.out);
  out << "wrote " << corpus.records.size() << " utterances; manifest " << corpus.manifest_path.string() << '\n';
  return kExitOk;
}

int run_prepare(const Args& a, std::ostream& out) {
  config::DataConfig d;
  d.manifest = a.manifest;
  d.hrl_language = a.hrl_language;
  d.n_folds = a.n_folds;
  d.min_duration_s = a.min_duration;
  d.max_duration_s = a.max_duration;
  auto records = config::load_records(d);
  const fs::path root = config::default_audio_root(d);
  for (auto& r : records) {
    r.audio_path = fs::absolute(features::resolve_audio(root, r)).lexically_normal().string();
    r.split.reset();
  }
  const auto sessions = config::fold_sessions(records, d.n_folds);
  fs::create_directories(a.out);
  manifest::write_manifest(fs::path(a.out) / "manifest.jsonl", records);
  for (std::size_t k = 0; k < sessions.size(); ++k) {
    const fs::path dir = fs::path(a.out) / ("fold" + std::to_string(k));
    fs::create_directories(dir);
    manifest::write_manifest(dir / "manifest.jsonl", manifest::assign_fold_splits(records, sessions[k], d.hrl_language));
  }
  out << "prepared " << records.size() << " records into " << sessions.size() << " folds under " << a.out << '\n';
  return kExitOk;
}

int run_train(const Args& a, std::ostream& out) {
  auto exp = config::load_experiment_config(a.config);
  if (a.fold >= 0) exp.data.fold = static_cast<std::size_t>(a.fold);
  exp.validate();
  const auto mode = pipelines::parse_mode(a.mode);
  const auto cfg = exp.train_config(mode, a.seed);
  std::optional<pipelines::Checkpoint> init;
  if (!a.init.empty()) {
    if (mode != pipelines::Mode::kFinetune) throw std::invalid_argument("--init is only valid with --mode finetune");
    init = pipelines::load_checkpoint(a.init);
  }
  const auto records = config::load_records(exp.data);
  const auto corpora = config::corpora_for_fold(records, exp.data, exp.data.fold);
  features::FeatureStore store(config::default_audio_root(exp.data));

  const fs::path run_dir = fs::path(a.out) / (cfg.hash() + "-seed" + std::to_string(a.seed));
  fs::create_directories(run_dir);
  pipelines::RunOptions opts;
  opts.log_path = run_dir / "train.jsonl";
  if (!a.quiet) opts.progress = &out;
  const auto ckpt = pipelines::train(cfg, corpora, store, init ? &*init : nullptr, opts);
  pipelines::save_checkpoint(run_dir / "checkpoint", ckpt);
  const json run = {{"config_path", a.config},
                    {"config_hash", cfg.hash()},
                    {"experiment_hash", exp.hash()},
                    {"mode", a.mode},
                    {"seed", a.seed},
                    {"seeds", json::array({a.seed})},
                    {"fold", exp.data.fold},
                    {"init", a.init},
                    {"layout", {{"checkpoint", "checkpoint/"}, {"log", "train.jsonl"}}}};
  write_text(run_dir / "run.json", run.dump(2) + "\n");
  out << "checkpoint " << (run_dir / "checkpoint").string() << " best_epoch " << ckpt.best_epoch << ' '
      << ckpt.metric_name << ' ' << ckpt.best_metric << '\n';
  return kExitOk;
}

struct Loaded {
  pipelines::Checkpoint checkpoint;
  std::vector<UtteranceRecord> records;
  features::FeatureStore store;
};

Loaded load_for_inference(const Args& a) {
  config::DataConfig d;
  d.manifest = a.manifest;
  d.min_duration_s = 0.0;
  d.max_duration_s = 1e300;
  Loaded l{pipelines::load_checkpoint(a.checkpoint), {}, features::FeatureStore(config::default_audio_root(d))};
  auto records = manifest::normalize_labels(manifest::read_manifest(d.manifest));
  l.records = with_split(records, a.split);
  l.store.load(l.records, false);
  return l;
}

int run_eval(const Args& a, std::ostream& out) {
  auto l = load_for_inference(a);
  const auto report = pipelines::evaluate(l.checkpoint.params, l.checkpoint.config.encoder, l.records, l.store);
  std::vector<int> truths, preds;
  std::vector<Gender> genders;
  for (const auto& r : l.records) {
    truths.push_back(static_cast<int>(*r.emotion));
    genders.push_back(r.gender);
  }
  preds = pipelines::predict(l.checkpoint.params, l.checkpoint.config.encoder, l.records, l.store);
  const auto gender = eval::gender_report(truths, preds, genders);
  fs::create_directories(a.out);
  json j = eval::to_json(report);
  write_text(fs::path(a.out) / "report.json", j.dump(2) + "\n");
  write_text(fs::path(a.out) / "report.txt", eval::render_report(report));
  write_text(fs::path(a.out) / "gender.txt", eval::render_gender_report(gender));
  write_text(fs::path(a.out) / "gender.json", eval::to_json(gender).dump(2) + "\n");
  out << eval::render_report(report);
  return kExitOk;
}

int run_confusion_delta(const Args& a, std::ostream& out) {
  std::vector<eval::ConfusionMatrix> ma, mb;
  for (const auto& p : a.a_reports) ma.push_back(confusion_from_json(p));
  for (const auto& p : a.b_reports) mb.push_back(confusion_from_json(p));
  const auto delta = eval::confusion_delta(ma, mb);
  const std::string text = eval::render_confusion_delta(delta);
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "confusion_delta.txt", text);
  write_text(fs::path(a.out) / "confusion_delta.json", json{{"delta", delta}}.dump(2) + "\n");
  out << text;
  return kExitOk;
}

int run_export_embeddings(const Args& a, std::ostream& out) {
  auto l = load_for_inference(a);
  const fs::path path(a.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  pipelines::export_embeddings(l.checkpoint.params, l.checkpoint.config.encoder, l.records, l.store, path);
  out << "wrote " << l.records.size() << " embeddings to " << path.string() << '\n';
  return kExitOk;
}

int run_augment_preview(const Args& a, std::ostream& out) {
  augment::AugmentSpec spec;
  if (!a.config.empty()) {
    spec = config::load_experiment_config(a.config).train_config(pipelines::Mode::kBaseline, a.seed).augment;
  }
  const auto pipeline = augment::parse_pipeline(a.pipeline);
  dsp::AudioClip clip = dsp::load_audio(a.audio);
  dsp::FrontEndParams params;
  if (clip.sample_rate != params.sample_rate) clip = dsp::resample(clip, params.sample_rate);
  dsp::LogMelExtractor extractor(params);
  RngStream rng = RngStream(a.seed).split("augment_preview");
  const auto clean = extractor(clip);
  std::vector<dsp::MelSpectrogram> views;
  if (pipeline == augment::Pipeline::kClAdapt || pipeline == augment::Pipeline::kBaseline) {
    views = augment::make_views(clip, pipeline, spec, extractor, rng);
  } else {
    views = augment::make_views(clean, pipeline, spec, rng);
  }
  fs::create_directories(a.out);
  auto dump = [&](const std::string& name, const dsp::MelSpectrogram& m) {
    dsp::write_matrix(fs::path(a.out) / name, m.n_mels, m.n_frames, m.values);
  };
  dump("clean.smat", clean);
  for (std::size_t i = 0; i < views.size(); ++i) dump("view" + std::to_string(i) + ".smat", views[i]);
  out << "wrote clean + " << views.size() << " views to " << a.out << '\n';
  return kExitOk;
}

int run_sweep(const Args& a, std::ostream& out) {
  auto exp = config::load_experiment_config(a.config);
  if (!a.seeds.empty()) exp.seeds = a.seeds;
  if (!a.folds.empty()) exp.folds = a.folds;
  exp.validate();
  const fs::path dir = fs::path(a.out) / exp.hash();
  experiment::Options opts;
  opts.out_dir = dir;
  opts.models = a.models;
  if (!a.quiet) opts.progress = &out;
  const auto bundle = experiment::reproduce_experiment(exp, opts);
  experiment::write_bundle(bundle, dir);
  json run = {{"config_path", a.config}, {"config_hash", exp.hash()}, {"seeds", exp.seeds},
              {"folds", exp.fold_indices()}, {"layout", {{"logs", "logs/"}, {"folds", "folds/"}}}};
  write_text(dir / "run.json", run.dump(2) + "\n");
  std::ifstream table(dir / "comparison.txt");
  out << table.rdbuf();
  return kExitOk;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ser_lab: cross-lingual speech emotion recognition lab", "ser_lab"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  Args a;
  const std::vector<std::string> pipelines_names{"cl_adapt", "byol_ssl", "byol_supervised", "baseline"};
  const std::vector<std::string> split_names{"train", "validation", "test", "all"};

  auto* gen = app.add_subcommand("gen-synth", "Generate the synthetic two-domain corpus");
  gen->add_option("--out", a.out, "Output directory")->required();
  gen->add_option("--seed", a.seed, "Generator seed")->capture_default_str();
  gen->add_option("--n-speakers", a.n_speakers, "Speakers per language domain")->capture_default_str();
  gen->add_option("--utterances", a.utterances, "Utterances per speaker")->capture_default_str();
  gen->add_option("--sessions", a.sessions, "Recording sessions per domain")->capture_default_str();

  auto* prep = app.add_subcommand("prepare", "Normalize labels, filter durations and write per-fold manifests");
  prep->add_option("--manifest", a.manifest, "Input manifest (JSON lines)")->required();
  prep->add_option("--out", a.out, "Output directory")->required();
  prep->add_option("--hrl-language", a.hrl_language, "Language tag of the labeled corpus")->capture_default_str();
  prep->add_option("--n-folds", a.n_folds, "Leave-one-session-out folds")->capture_default_str();
  prep->add_option("--min-duration", a.min_duration, "Shortest kept utterance (s)")->capture_default_str();
  prep->add_option("--max-duration", a.max_duration, "Longest kept utterance (s)")->capture_default_str();

  auto* train = app.add_subcommand("train", "Train one model");
  train->add_option("--mode", a.mode, "Training recipe")
      ->required()
      ->check(CLI::IsMember({"baseline", "contrastive_adapt", "finetune", "byol_mixed"}));
  train->add_option("--config", a.config, "Experiment config (JSON)")->required();
  train->add_option("--seed", a.seed, "Run seed")->required();
  train->add_option("--out", a.out, "Output directory")->required();
  train->add_option("--init", a.init, "Stage-1 checkpoint directory (finetune only)");
  train->add_option("--fold", a.fold, "Held-out session index (overrides data.fold)");
  train->add_flag("--quiet", a.quiet, "No per-epoch progress lines");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on one split of a manifest");
  ev->add_option("--checkpoint", a.checkpoint, "Checkpoint directory")->required();
  ev->add_option("--manifest", a.manifest, "Manifest with split labels")->required();
  ev->add_option("--split", a.split, "Split to evaluate")->capture_default_str()->check(CLI::IsMember(split_names));
  ev->add_option("--out", a.out, "Output directory")->required();

  auto* cd = app.add_subcommand("confusion-delta", "Mean confusion of A minus mean confusion of B");
  cd->add_option("--a", a.a_reports, "Report JSON files of model A (one per fold)")->required();
  cd->add_option("--b", a.b_reports, "Report JSON files of model B (one per fold)")->required();
  cd->add_option("--out", a.out, "Output directory")->required();

  auto* ex = app.add_subcommand("export-embeddings", "Write utterance embeddings as CSV");
  ex->add_option("--checkpoint", a.checkpoint, "Checkpoint directory")->required();
  ex->add_option("--manifest", a.manifest, "Manifest")->required();
  ex->add_option("--split", a.split, "Split to export")->capture_default_str()->check(CLI::IsMember(split_names));
  ex->add_option("--out", a.out, "Output CSV path")->required();

  auto* ap = app.add_subcommand("augment-preview", "Write clean and augmented spectrograms of one clip");
  ap->add_option("--audio", a.audio, "Input WAV")->required();
  ap->add_option("--pipeline", a.pipeline, "View pipeline")->capture_default_str()->check(CLI::IsMember(pipelines_names));
  ap->add_option("--config", a.config, "Experiment config supplying the augment section");
  ap->add_option("--seed", a.seed, "Augmentation seed")->capture_default_str();
  ap->add_option("--out", a.out, "Output directory")->required();

  auto* sw = app.add_subcommand("sweep", "Run Baseline, Contrastive and BYOL over seeds and folds");
  sw->add_option("--config", a.config, "Experiment config (JSON)")->required();
  sw->add_option("--seeds", a.seeds, "Comma-separated seeds (overrides config)")->delimiter(',');
  sw->add_option("--folds", a.folds, "Comma-separated fold indices (overrides config)")->delimiter(',');
  sw->add_option("--models", a.models, "Subset of Baseline,Contrastive,BYOL")
      ->delimiter(',')
      ->check(CLI::IsMember({"Baseline", "Contrastive", "BYOL"}));
  sw->add_option("--out", a.out, "Output directory")->required();
  sw->add_flag("--quiet", a.quiet, "No progress lines");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitValidation;
  }

  try {
    if (gen->parsed()) return run_gen_synth(a, out);
    if (prep->parsed()) return run_prepare(a, out);
    if (train->parsed()) return run_train(a, out);
    if (ev->parsed()) return run_eval(a, out);
    if (cd->parsed()) return run_confusion_delta(a, out);
    if (ex->parsed()) return run_export_embeddings(a, out);
    if (ap->parsed()) return run_augment_preview(a, out);
    if (sw->parsed()) return run_sweep(a, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitValidation;
}

int cli_dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_dispatch(args, std::cout, std::cerr);
}

}  // namespace serlab::cli
