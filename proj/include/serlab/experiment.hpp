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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "serlab/config.hpp"
#include "serlab/eval.hpp"

namespace serlab::experiment {

inline const char* const kBaseline = "Baseline";
inline const char* const kContrastive = "Contrastive";
inline const char* const kByol = "BYOL";

struct RunResult {
  std::uint64_t seed = 0;
  std::size_t fold = 0;
  std::string session;
  std::vector<int> truths;
  std::vector<Gender> genders;
  std::map<std::string, std::vector<int>> predictions;
  std::map<std::string, eval::EvalReport> reports;
  /// CPU time of the job's own thread.
  double cpu_seconds = 0.0;
};

struct Bundle {
  std::string config_hash;
  std::vector<std::string> models;
  std::vector<RunResult> runs;
  std::map<std::string, eval::EvalReport> aggregate;
  std::map<std::string, eval::GenderReport> gender;
  /// model -> signed delta against the baseline
  std::map<std::string, std::vector<std::vector<std::int64_t>>> confusion_delta;
  /// model -> per-seed mean-over-folds macro F1 gain over the baseline
  std::map<std::string, std::vector<double>> seed_gain;
  std::map<std::string, double> median_gain;
  /// Loading, feature extraction and variant-bank CPU time before the jobs.
  double setup_cpu_seconds = 0.0;
  double wall_seconds = 0.0;
  /// Whether jobs shared one pre-filled feature store (and could run concurrently).
  bool shared_features = false;
};

/// Makespan of running jobs with the given durations on `workers` threads
/// that each take the next job in order as soon as they are free.
double list_schedule_makespan(const std::vector<double>& durations, std::size_t workers);

struct Options {
  /// Per-run training logs go under out_dir/logs when set.
  std::filesystem::path out_dir;
  std::ostream* progress = nullptr;
  /// Subset of {Baseline, Contrastive, BYOL}; empty runs all three.
  std::vector<std::string> models;
};

/// Runs baseline, contrastive adapt -> finetune, and byol_mixed on the same
/// folds and seeds, evaluating each on the held-out LRL session.
Bundle reproduce_experiment(const config::ExperimentConfig& config, const Options& options = {});

/// Writes comparison.{txt,json}, confusion_delta.txt, gender.txt,
/// aggregate.json, summary.json and folds/seed<k>-fold<f>.json.
void write_bundle(const Bundle& bundle, const std::filesystem::path& dir);

nlohmann::json summary_json(const Bundle& bundle);

}  // namespace serlab::experiment
