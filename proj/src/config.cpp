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

#include "serlab/config.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "serlab/rng.hpp"

namespace serlab::config {

using nlohmann::json;
using pipelines::Mode;

namespace {

const std::set<std::string>& stage_names() {
  static const std::set<std::string> s{"baseline", "contrastive_adapt", "finetune", "byol_mixed"};
  return s;
}

json data_to_json(const DataConfig& d) {
  return {{"manifest", d.manifest.generic_string()},
          {"audio_root", d.audio_root.generic_string()},
          {"hrl_language", d.hrl_language},
          {"n_folds", d.n_folds},
          {"fold", d.fold},
          {"min_duration_s", d.min_duration_s},
          {"max_duration_s", d.max_duration_s}};
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

DataConfig data_from_json(const json& j, const std::filesystem::path& base) {
  if (!j.is_object()) throw std::invalid_argument("data section must be an object");
  DataConfig d;
  for (const auto& [key, v] : j.items()) {
    if (key == "manifest") d.manifest = resolve(v.get<std::string>(), base);
    else if (key == "audio_root") d.audio_root = resolve(v.get<std::string>(), base);
    else if (key == "hrl_language") d.hrl_language = v.get<std::string>();
    else if (key == "n_folds") d.n_folds = v.get<std::size_t>();
    else if (key == "fold") d.fold = v.get<std::size_t>();
    else if (key == "min_duration_s") d.min_duration_s = v.get<double>();
    else if (key == "max_duration_s") d.max_duration_s = v.get<double>();
    else throw std::invalid_argument("data: unknown key '" + key + "'");
  }
  return d;
}

}  // namespace

pipelines::TrainConfig ExperimentConfig::train_config(Mode mode, std::uint64_t seed) const {
  json merged = json::object();
  merged.merge_patch(train);
  if (auto it = stages.find(pipelines::to_string(mode)); it != stages.end()) merged.merge_patch(it->second);
  merged["mode"] = pipelines::to_string(mode);
  merged["seed"] = seed;
  return pipelines::TrainConfig::from_json(merged);
}

std::vector<std::size_t> ExperimentConfig::fold_indices() const {
  if (!folds.empty()) return folds;
  std::vector<std::size_t> all(data.n_folds);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

json ExperimentConfig::to_json() const {
  json st = json::object();
  for (const auto& [k, v] : stages) st[k] = v;
  return {{"data", data_to_json(data)}, {"train", train}, {"stages", st}, {"seeds", seeds}, {"folds", folds}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  ExperimentConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "data") c.data = data_from_json(v, base_dir);
    else if (key == "train") {
      if (!v.is_object()) throw std::invalid_argument("train section must be an object");
      if (v.contains("mode") || v.contains("seed")) {
        throw std::invalid_argument("train: 'mode' and 'seed' are chosen per run, not in the config");
      }
      c.train = v;
    } else if (key == "stages") {
      if (!v.is_object()) throw std::invalid_argument("stages section must be an object");
      for (const auto& [stage, patch] : v.items()) {
        if (!stage_names().count(stage)) throw std::invalid_argument("stages: unknown stage '" + stage + "'");
        if (!patch.is_object()) throw std::invalid_argument("stages." + stage + " must be an object");
        c.stages[stage] = patch;
      }
    } else if (key == "seeds") c.seeds = v.get<std::vector<std::uint64_t>>();
    else if (key == "folds") c.folds = v.get<std::vector<std::size_t>>();
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (data.n_folds == 0) throw std::invalid_argument("data.n_folds must be positive");
  if (data.fold >= data.n_folds) throw std::invalid_argument("data.fold must be below n_folds");
  if (!(data.min_duration_s < data.max_duration_s)) {
    throw std::invalid_argument("data: min_duration_s must be below max_duration_s");
  }
  if (seeds.empty()) throw std::invalid_argument("seeds must not be empty");
  for (auto f : folds)
    if (f >= data.n_folds) throw std::invalid_argument("folds: index " + std::to_string(f) + " out of range");
  // every stage must resolve to a valid TrainConfig
  for (Mode m : {Mode::kBaseline, Mode::kContrastiveAdapt, Mode::kFinetune, Mode::kByolMixed}) {
    (void)train_config(m, seeds.front());
  }
}

std::string ExperimentConfig::hash() const {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(to_json().dump());
  return os.str();
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return ExperimentConfig::from_json(j, path.parent_path());
}

std::vector<UtteranceRecord> load_records(const DataConfig& data) {
  if (data.manifest.empty()) throw std::invalid_argument("data.manifest is required");
  auto records = manifest::read_manifest(data.manifest);
  manifest::validate_records(records);
  records = manifest::normalize_labels(std::move(records));
  return manifest::filter_duration(records, data.min_duration_s, data.max_duration_s);
}

std::vector<std::string> fold_sessions(const std::vector<UtteranceRecord>& records, std::size_t n_folds) {
  std::set<std::string> sessions;
  for (const auto& r : records) sessions.insert(r.session);
  if (sessions.size() != n_folds) {
    throw std::invalid_argument(std::to_string(sessions.size()) + " distinct sessions; expected " +
                                std::to_string(n_folds) + " for leave-one-session-out folds");
  }
  return {sessions.begin(), sessions.end()};
}

pipelines::CorpusSet corpora_for_fold(const std::vector<UtteranceRecord>& records, const DataConfig& data,
                                      std::size_t fold) {
  const bool presplit = !records.empty() && std::all_of(records.begin(), records.end(),
                                                         [](const UtteranceRecord& r) { return r.split.has_value(); });
  if (presplit) return pipelines::corpus_from_splits(records, data.hrl_language);
  const auto sessions = fold_sessions(records, data.n_folds);
  if (fold >= sessions.size()) throw std::invalid_argument("fold index out of range");
  return pipelines::corpus_from_splits(manifest::assign_fold_splits(records, sessions[fold], data.hrl_language),
                                       data.hrl_language);
}

std::filesystem::path default_audio_root(const DataConfig& data) {
  if (!data.audio_root.empty()) return data.audio_root;
  return data.manifest.parent_path();
}

}  // namespace serlab::config
