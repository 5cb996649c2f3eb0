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
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "serlab/manifest.hpp"

namespace serlab::eval {

/// Rows are truth, columns prediction.
using ConfusionMatrix = std::vector<std::vector<std::int64_t>>;

struct GroupScore {
  std::int64_t n = 0;
  std::int64_t correct = 0;
  double rate = 0.0;  // correct / n, 0 for empty groups
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

struct EvalReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double uar = 0.0;
  ConfusionMatrix confusion;
  std::vector<double> per_class_recall;
  std::vector<double> per_class_precision;
  std::vector<double> per_class_f1;
  /// Classes with no truth samples (scored 0 in the macro averages).
  std::vector<int> zero_support;
  std::map<std::string, GroupScore> per_gender;
  std::int64_t n_samples = 0;
  /// Filled by aggregate_runs: metric name -> mean/std across runs.
  std::map<std::string, MeanStd> aggregate;
  std::int64_t n_runs = 1;
};

EvalReport compute_metrics(const std::vector<int>& truths, const std::vector<int>& predictions,
                           const std::vector<Gender>& genders = {}, int n_classes = kNumEmotions);

/// Entrywise mean(A) - mean(B), rounded half away from zero.
std::vector<std::vector<std::int64_t>> confusion_delta(const std::vector<ConfusionMatrix>& a,
                                                       const std::vector<ConfusionMatrix>& b);
std::vector<std::vector<double>> confusion_delta_exact(const std::vector<ConfusionMatrix>& a,
                                                       const std::vector<ConfusionMatrix>& b);

struct GenderReport {
  std::map<std::string, GroupScore> groups;
  /// group -> per-class recall (class order fixed)
  std::map<std::string, std::vector<double>> per_class_recall;
  /// Largest over smallest non-empty group size.
  double imbalance_ratio = 1.0;
};

GenderReport gender_report(const std::vector<int>& truths, const std::vector<int>& predictions,
                           const std::vector<Gender>& genders, int n_classes = kNumEmotions);

/// Sample mean and standard deviation (n - 1) of every scalar metric.
EvalReport aggregate_runs(const std::vector<EvalReport>& reports);

// ---------------------------------------------------------------------------
// Rendering

/// "0.906_(0.017)".
std::string format_mean_std(double mean, double std, int precision = 3);

struct ModelColumn {
  std::string name;
  EvalReport report;  // aggregated
};

/// Rows Accuracy / Macro F1 / UAR, one column per model.
std::string render_comparison_table(const std::vector<ModelColumn>& columns, int precision = 3);
nlohmann::json comparison_json(const std::vector<ModelColumn>& columns);

/// Signed delta in a "Truth\Pred" grid over anger, happiness, neutral, sadness.
std::string render_confusion_delta(const std::vector<std::vector<std::int64_t>>& delta);
std::string render_confusion(const ConfusionMatrix& m);

/// Percent correct per gender, e.g. "correctly predicts 74% of female and 54% of male".
std::string render_gender_report(const GenderReport& report, const std::string& model_name = "model");

std::string render_report(const EvalReport& report);
nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const GenderReport& report);

/// CSV with header id,emotion,gender,language,e0..e{dim-1}; `values` is
/// row-major [records.size(), dim].
void write_embeddings_csv(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records,
                          const std::vector<float>& values, std::size_t dim);

}  // namespace serlab::eval
