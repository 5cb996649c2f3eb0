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

#include "serlab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <mutex>
#include <stdexcept>

#include "serlab/features.hpp"
#include "serlab/parallel.hpp"
#include "serlab/pipelines.hpp"

namespace serlab::experiment {

using nlohmann::json;
using pipelines::Mode;

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

pipelines::RunOptions run_options(const Options& o, std::uint64_t seed, std::size_t fold, Mode mode) {
  pipelines::RunOptions r;
  if (!o.out_dir.empty()) {
    r.log_path = o.out_dir / "logs" /
                 ("seed" + std::to_string(seed) + "-fold" + std::to_string(fold) + "-" + pipelines::to_string(mode) +
                  ".jsonl");
  }
  r.progress = o.progress;
  return r;
}

double cpu_seconds(clockid_t clock) {
  timespec ts{};
  clock_gettime(clock, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

double thread_cpu_seconds() { return cpu_seconds(CLOCK_THREAD_CPUTIME_ID); }
// Setup runs before any job starts, so process time counts its helper threads.
double process_cpu_seconds() { return cpu_seconds(CLOCK_PROCESS_CPUTIME_ID); }

std::mutex& progress_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

double list_schedule_makespan(const std::vector<double>& durations, std::size_t workers) {
  if (workers == 0) throw std::invalid_argument("list_schedule_makespan: workers must be positive");
  std::vector<double> free_at(workers, 0.0);
  for (double d : durations) {
    auto it = std::min_element(free_at.begin(), free_at.end());
    *it += d;
  }
  return *std::max_element(free_at.begin(), free_at.end());
}

Bundle reproduce_experiment(const config::ExperimentConfig& cfg, const Options& options) {
  cfg.validate();
  const auto wall_start = std::chrono::steady_clock::now();
  const double setup_start = process_cpu_seconds();
  Bundle bundle;
  bundle.config_hash = cfg.hash();
  bundle.models = options.models.empty() ? std::vector<std::string>{kBaseline, kContrastive, kByol} : options.models;
  for (const auto& m : bundle.models) {
    if (m != kBaseline && m != kContrastive && m != kByol) throw std::invalid_argument("unknown model column " + m);
  }
  auto wants = [&](const char* m) { return std::find(bundle.models.begin(), bundle.models.end(), m) != bundle.models.end(); };

  const auto records = config::load_records(cfg.data);
  features::FeatureStore fs(config::default_audio_root(cfg.data));
  const auto sessions = config::fold_sessions(records, cfg.data.n_folds);

  struct Job {
    std::uint64_t seed;
    std::size_t fold;
  };
  std::vector<Job> jobs;
  for (std::uint64_t seed : cfg.seeds)
    for (std::size_t fold : cfg.fold_indices()) jobs.push_back({seed, fold});

  // Jobs may run concurrently only when the feature store can be filled up
  // front and then shared read-only: every stage must agree on the variant
  // bank, and the bank must not depend on the run seed.
  bool shared = true;
  const auto probe = cfg.train_config(Mode::kBaseline, cfg.seeds.front());
  const auto bank_hash = features::hash_augment_spec(probe.augment);
  for (Mode m : {Mode::kBaseline, Mode::kContrastiveAdapt, Mode::kFinetune}) {
    const auto c = cfg.train_config(m, cfg.seeds.front());
    if (c.waveform_variants != probe.waveform_variants || features::hash_augment_spec(c.augment) != bank_hash ||
        c.variant_seed != probe.variant_seed) {
      shared = false;
    }
  }
  if (probe.waveform_variants > 0 && !probe.variant_seed) shared = false;
  if (shared) {
    fs.load(records, true);
    if (probe.waveform_variants > 0) {
      fs.build_variants(records, probe.augment, probe.waveform_variants, *probe.variant_seed);
    }
  }

  bundle.shared_features = shared;
  bundle.setup_cpu_seconds = process_cpu_seconds() - setup_start;

  std::vector<RunResult> results(jobs.size());
  auto run_job = [&](std::size_t j) {
    const double job_start = thread_cpu_seconds();
    const std::uint64_t seed = jobs[j].seed;
    const std::size_t fold = jobs[j].fold;
    const auto corpora = config::corpora_for_fold(records, cfg.data, fold);
    if (!shared) fs.load(corpora.lrl_eval, false);
    RunResult& run = results[j];
    run.seed = seed;
    run.fold = fold;
    run.session = sessions.at(fold);
    for (const auto& r : corpora.lrl_eval) {
      if (!r.emotion) throw std::invalid_argument("lrl_eval record '" + r.id + "' has no emotion label");
      run.truths.push_back(static_cast<int>(*r.emotion));
      run.genders.push_back(r.gender);
    }
    auto opts = [&](Mode mode) {
      auto o = run_options(options, seed, fold, mode);
      o.features_ready = shared;
      if (shared) o.progress = nullptr;
      return o;
    };
    auto score = [&](const char* name, const pipelines::Checkpoint& ckpt) {
      auto preds = pipelines::predict(ckpt.params, ckpt.config.encoder, corpora.lrl_eval, fs);
      run.reports[name] = eval::compute_metrics(run.truths, preds, run.genders);
      run.predictions[name] = std::move(preds);
    };
    if (wants(kBaseline)) {
      const auto c = cfg.train_config(Mode::kBaseline, seed);
      score(kBaseline, pipelines::train(c, corpora, fs, nullptr, opts(c.mode)));
    }
    if (wants(kContrastive)) {
      const auto c1 = cfg.train_config(Mode::kContrastiveAdapt, seed);
      const auto stage1 = pipelines::train(c1, corpora, fs, nullptr, opts(c1.mode));
      const auto c2 = cfg.train_config(Mode::kFinetune, seed);
      score(kContrastive, pipelines::train(c2, corpora, fs, &stage1, opts(c2.mode)));
    }
    if (wants(kByol)) {
      const auto c = cfg.train_config(Mode::kByolMixed, seed);
      score(kByol, pipelines::train(c, corpora, fs, nullptr, opts(c.mode)));
    }
    run.cpu_seconds = thread_cpu_seconds() - job_start;
    if (options.progress) {
      std::lock_guard<std::mutex> lock(progress_mutex());
      *options.progress << "seed " << seed << " fold " << fold << " lrl macro_f1";
      for (const auto& [name, rep] : run.reports) *options.progress << ' ' << name << ' ' << rep.macro_f1;
      *options.progress << std::endl;
    }
  };
  if (shared) {
    parallel_for(jobs.size(), run_job);
  } else {
    for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
  }
  bundle.runs = std::move(results);
  bundle.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();

  for (const auto& m : bundle.models) {
    std::vector<eval::EvalReport> reports;
    std::vector<int> truths, preds;
    std::vector<Gender> genders;
    for (const auto& r : bundle.runs) {
      reports.push_back(r.reports.at(m));
      truths.insert(truths.end(), r.truths.begin(), r.truths.end());
      genders.insert(genders.end(), r.genders.begin(), r.genders.end());
      const auto& p = r.predictions.at(m);
      preds.insert(preds.end(), p.begin(), p.end());
    }
    bundle.aggregate[m] = reports.size() >= 2 ? eval::aggregate_runs(reports) : reports.front();
    bundle.gender[m] = eval::gender_report(truths, preds, genders);
  }

  if (wants(kBaseline)) {
    std::vector<eval::ConfusionMatrix> base;
    for (const auto& r : bundle.runs) base.push_back(r.reports.at(kBaseline).confusion);
    for (const auto& m : bundle.models) {
      if (m == kBaseline) continue;
      std::vector<eval::ConfusionMatrix> other;
      for (const auto& r : bundle.runs) other.push_back(r.reports.at(m).confusion);
      bundle.confusion_delta[m] = eval::confusion_delta(other, base);
      std::vector<double> gains;
      for (std::uint64_t seed : cfg.seeds) {
        double sum = 0.0;
        int n = 0;
        for (const auto& r : bundle.runs) {
          if (r.seed != seed) continue;
          sum += r.reports.at(m).macro_f1 - r.reports.at(kBaseline).macro_f1;
          ++n;
        }
        gains.push_back(sum / n);
      }
      bundle.median_gain[m] = median(gains);
      bundle.seed_gain[m] = std::move(gains);
    }
  }
  return bundle;
}

json summary_json(const Bundle& b) {
  json gains = json::object();
  for (const auto& [m, g] : b.seed_gain) {
    gains[m] = {{"per_seed_macro_f1_gain", g}, {"median_macro_f1_gain", b.median_gain.at(m)}};
  }
  json job_cpu = json::array();
  for (const auto& r : b.runs) job_cpu.push_back(r.cpu_seconds);
  return {{"config_hash", b.config_hash},
          {"models", b.models},
          {"n_runs", b.runs.size()},
          {"gain_over_baseline", gains},
          {"timing",
           {{"wall_seconds", b.wall_seconds},
            {"setup_cpu_seconds", b.setup_cpu_seconds},
            {"job_cpu_seconds", job_cpu},
            {"shared_features", b.shared_features}}}};
}

void write_bundle(const Bundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "folds");
  std::vector<eval::ModelColumn> columns;
  for (const auto& m : b.models) columns.push_back({m, b.aggregate.at(m)});
  write_text(dir / "comparison.txt", eval::render_comparison_table(columns));
  write_text(dir / "comparison.json", eval::comparison_json(columns).dump(2) + "\n");

  std::string delta;
  for (const auto& [m, d] : b.confusion_delta) {
    delta += m + " - " + kBaseline + "\n" + eval::render_confusion_delta(d) + "\n";
  }
  write_text(dir / "confusion_delta.txt", delta);

  std::string gender;
  json gender_json = json::object();
  for (const auto& m : b.models) {
    gender += eval::render_gender_report(b.gender.at(m), m) + "\n";
    gender_json[m] = eval::to_json(b.gender.at(m));
  }
  write_text(dir / "gender.txt", gender);
  write_text(dir / "gender.json", gender_json.dump(2) + "\n");

  json agg = json::object();
  for (const auto& m : b.models) agg[m] = eval::to_json(b.aggregate.at(m));
  write_text(dir / "aggregate.json", agg.dump(2) + "\n");
  write_text(dir / "summary.json", summary_json(b).dump(2) + "\n");

  for (const auto& r : b.runs) {
    json j = {{"seed", r.seed}, {"fold", r.fold}, {"session", r.session}, {"cpu_seconds", r.cpu_seconds}};
    for (const auto& [m, rep] : r.reports) j["models"][m] = eval::to_json(rep);
    write_text(dir / "folds" / ("seed" + std::to_string(r.seed) + "-fold" + std::to_string(r.fold) + ".json"),
               j.dump(2) + "\n");
  }
}

}  // namespace serlab::experiment
