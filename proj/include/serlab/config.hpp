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
#include "serlab/pipelines.hpp"

namespace serlab::config {

struct DataConfig {
  /// Manifest path; relative paths resolve against the config file.
  std::filesystem::path manifest;
  /// Audio root for relative audio paths; defaults to the manifest directory.
  std::filesystem::path audio_root;
  std::string hrl_language = "hrl";
  std::size_t n_folds = 5;
  /// Held-out session index used by single runs when the manifest carries no splits.
  std::size_t fold = 0;
  double min_duration_s = 0.5;
  double max_duration_s = 12.0;
};

/// One JSON document: "data", "train" (shared TrainConfig keys), "stages"
/// (per-mode overrides), "seeds", "folds".
struct ExperimentConfig {
  DataConfig data;
  nlohmann::json train = nlohmann::json::object();
  std::map<std::string, nlohmann::json> stages;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  /// Fold indices to run; empty means all n_folds.
  std::vector<std::size_t> folds;

  /// defaults(mode) <- train <- stages[mode] <- seed.
  pipelines::TrainConfig train_config(pipelines::Mode mode, std::uint64_t seed) const;
  std::vector<std::size_t> fold_indices() const;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  std::string hash() const;
  void validate() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Manifest records after label normalization and the duration filter.
std::vector<UtteranceRecord> load_records(const DataConfig& data);
/// Session names in sorted order; fold k holds out sessions[k].
std::vector<std::string> fold_sessions(const std::vector<UtteranceRecord>& records, std::size_t n_folds);
/// Records with splits for one fold. Records that already carry splits are used as-is.
pipelines::CorpusSet corpora_for_fold(const std::vector<UtteranceRecord>& records, const DataConfig& data,
                                      std::size_t fold);

std::filesystem::path default_audio_root(const DataConfig& data);

}  // namespace serlab::config
