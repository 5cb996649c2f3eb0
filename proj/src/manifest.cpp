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

#include "serlab/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace serlab {

using nlohmann::json;

std::string_view to_string(Emotion e) {
  switch (e) {
    case Emotion::kAngry: return "angry";
    case Emotion::kHappy: return "happy";
    case Emotion::kNeutral: return "neutral";
    case Emotion::kSad: return "sad";
  }
  return "?";
}

std::string_view display_name(Emotion e) {
  switch (e) {
    case Emotion::kAngry: return "anger";
    case Emotion::kHappy: return "happiness";
    case Emotion::kNeutral: return "neutral";
    case Emotion::kSad: return "sadness";
  }
  return "?";
}

std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::kFemale: return "female";
    case Gender::kMale: return "male";
    case Gender::kUnknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

std::optional<Emotion> parse_emotion(std::string_view text) {
  for (Emotion e : kAllEmotions) {
    if (text == to_string(e)) return e;
  }
  return std::nullopt;
}

Gender parse_gender(std::string_view text) {
  if (text == "female") return Gender::kFemale;
  if (text == "male") return Gender::kMale;
  return Gender::kUnknown;
}

std::optional<Split> parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "validation") return Split::kValidation;
  if (text == "test") return Split::kTest;
  return std::nullopt;
}

namespace manifest {

LabelMap default_label_map() {
  LabelMap map;
  for (Emotion e : kAllEmotions) map.emplace(std::string(to_string(e)), e);
  map.emplace("excited", Emotion::kHappy);
  return map;
}

std::vector<UtteranceRecord> normalize_labels(
    std::vector<UtteranceRecord> records, const LabelMap& raw_label_map) {
  LabelMap map = default_label_map();
  for (const auto& [raw, target] : raw_label_map) map[raw] = target;

  std::vector<UtteranceRecord> out;
  out.reserve(records.size());
  for (auto& r : records) {
    if (r.emotion_raw) {
      auto it = map.find(*r.emotion_raw);
      if (it == map.end()) {
        throw std::invalid_argument("normalize_labels: unknown raw label '" +
                                    *r.emotion_raw + "' on record " + r.id);
      }
      if (!it->second) continue;  // DROP
      r.emotion = it->second;
      r.emotion_raw.reset();
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<UtteranceRecord> filter_duration(
    const std::vector<UtteranceRecord>& records, double min_s, double max_s) {
  if (!(min_s < max_s)) {
    throw std::invalid_argument("filter_duration: min_s must be < max_s");
  }
  std::vector<UtteranceRecord> out;
  for (const auto& r : records) {
    if (r.duration_s >= min_s && r.duration_s <= max_s) out.push_back(r);
  }
  return out;
}

std::vector<Fold> make_loso_splits(const std::vector<UtteranceRecord>& records,
                                   std::size_t n_folds) {
  std::set<std::string> sessions;
  for (const auto& r : records) sessions.insert(r.session);
  if (sessions.size() < n_folds) {
    throw std::invalid_argument(
        "make_loso_splits: " + std::to_string(sessions.size()) +
        " distinct sessions, " + std::to_string(n_folds) + " folds requested");
  }
  if (sessions.size() > n_folds) {
    throw std::invalid_argument(
        "make_loso_splits: " + std::to_string(sessions.size()) +
        " distinct sessions cannot form exactly " + std::to_string(n_folds) +
        " leave-one-session-out folds");
  }
  std::vector<Fold> folds;
  for (const auto& s : sessions) {
    Fold f;
    f.session = s;
    for (const auto& r : records) {
      (r.session == s ? f.test : f.train).push_back(r);
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

std::vector<UtteranceRecord> assign_fold_splits(
    const std::vector<UtteranceRecord>& records, const std::string& session,
    const std::string& hrl_language) {
  std::vector<UtteranceRecord> out = records;
  for (auto& r : out) {
    if (r.session != session) {
      r.split = Split::kTrain;
    } else {
      r.split = r.language == hrl_language ? Split::kValidation : Split::kTest;
    }
  }
  return out;
}

void validate_records(const std::vector<UtteranceRecord>& records) {
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (r.id.empty()) throw std::invalid_argument("record with empty id");
    if (!ids.insert(r.id).second) {
      throw std::invalid_argument("duplicate record id: " + r.id);
    }
    if (!(r.duration_s > 0.0)) {
      throw std::invalid_argument("record " + r.id +
                                  ": duration_s must be positive");
    }
  }
}

std::string to_json_line(const UtteranceRecord& r) {
  json j;
  j["id"] = r.id;
  if (!r.audio_path.empty()) j["audio_path"] = r.audio_path;
  if (!r.speaker_id.empty()) j["speaker_id"] = r.speaker_id;
  if (r.emotion) j["emotion"] = std::string(to_string(*r.emotion));
  if (r.emotion_raw) j["emotion_raw"] = *r.emotion_raw;
  j["gender"] = std::string(to_string(r.gender));
  if (!r.session.empty()) j["session"] = r.session;
  if (!r.language.empty()) j["language"] = r.language;
  if (r.split) j["split"] = std::string(to_string(*r.split));
  j["duration_s"] = r.duration_s;
  return j.dump();
}

UtteranceRecord from_json_line(std::string_view line) {
  json j = json::parse(line);
  static const std::set<std::string> known = {
      "id",      "audio_path", "speaker_id", "emotion", "emotion_raw",
      "gender",  "session",    "language",   "split",   "duration_s"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw std::invalid_argument("manifest: unknown field '" + it.key() + "'");
    }
  }
  UtteranceRecord r;
  r.id = j.at("id").get<std::string>();
  r.audio_path = j.value("audio_path", "");
  r.speaker_id = j.value("speaker_id", "");
  if (j.contains("emotion")) {
    auto text = j["emotion"].get<std::string>();
    r.emotion = parse_emotion(text);
    if (!r.emotion) {
      throw std::invalid_argument("manifest: record " + r.id +
                                  " has non-canonical emotion '" + text +
                                  "'; use emotion_raw");
    }
  }
  if (j.contains("emotion_raw")) r.emotion_raw = j["emotion_raw"];
  r.gender = parse_gender(j.value("gender", "unknown"));
  r.session = j.value("session", "");
  r.language = j.value("language", "");
  if (j.contains("split")) {
    auto text = j["split"].get<std::string>();
    r.split = parse_split(text);
    if (!r.split) {
      throw std::invalid_argument("manifest: record " + r.id +
                                  " has unknown split '" + text + "'");
    }
  }
  r.duration_s = j.at("duration_s").get<double>();
  return r;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<UtteranceRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  for (const auto& r : records) out << to_json_line(r) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read manifest " + path.string());
  std::vector<UtteranceRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(from_json_line(line));
    } catch (const json::exception& e) {
      throw std::invalid_argument(path.string() + ":" +
                                  std::to_string(line_no) + ": " + e.what());
    }
  }
  validate_records(records);
  return records;
}

}  // namespace manifest

void validate_role(const CorpusRole& role) {
  for (const auto& r : role.records) {
    if (role.role == CorpusRoleKind::kHrlLabeled && !r.emotion) {
      throw std::invalid_argument("hrl_labeled record " + r.id +
                                  " has no emotion label");
    }
    if (role.role == CorpusRoleKind::kLrlUnlabeled && r.speaker_id.empty()) {
      throw std::invalid_argument("lrl_unlabeled record " + r.id +
                                  " has no speaker_id");
    }
  }
}

}  // namespace serlab
