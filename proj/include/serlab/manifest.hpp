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

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace serlab {

/// Four-class emotion set. Enumerator order is the fixed display order used
/// by every report: anger, happiness, neutral, sadness.
enum class Emotion : int { kAngry = 0, kHappy = 1, kNeutral = 2, kSad = 3 };
inline constexpr int kNumEmotions = 4;
inline constexpr std::array<Emotion, kNumEmotions> kAllEmotions = {
    Emotion::kAngry, Emotion::kHappy, Emotion::kNeutral, Emotion::kSad};

enum class Gender : int { kFemale = 0, kMale = 1, kUnknown = 2 };
enum class Split : int { kTrain = 0, kValidation = 1, kTest = 2 };

std::string_view to_string(Emotion e);
/// Table-style class names: anger, happiness, neutral, sadness.
std::string_view display_name(Emotion e);
std::string_view to_string(Gender g);
std::string_view to_string(Split s);
std::optional<Emotion> parse_emotion(std::string_view text);
Gender parse_gender(std::string_view text);
std::optional<Split> parse_split(std::string_view text);

struct UtteranceRecord {
  std::string id;
  std::string audio_path;
  std::string speaker_id;
  std::optional<Emotion> emotion;
  /// Source-corpus label awaiting normalize_labels().
  std::optional<std::string> emotion_raw;
  Gender gender = Gender::kUnknown;
  std::string session;
  std::string language;
  std::optional<Split> split;
  double duration_s = 0.0;

  bool operator==(const UtteranceRecord&) const = default;
};

namespace manifest {

/// A raw label maps to one of the four classes, or to std::nullopt (DROP).
using LabelMap = std::map<std::string, std::optional<Emotion>>;

/// Built-in mappings: the four class names map to themselves and "excited"
/// merges into "happy". Entries in `overrides` take precedence.
LabelMap default_label_map();

std::vector<UtteranceRecord> normalize_labels(
    std::vector<UtteranceRecord> records, const LabelMap& raw_label_map = {});

std::vector<UtteranceRecord> filter_duration(
    const std::vector<UtteranceRecord>& records, double min_s, double max_s);

struct Fold {
  std::string session;
  std::vector<UtteranceRecord> train;
  std::vector<UtteranceRecord> test;
};

/// Leave-one-session-out partitions, one per session in sorted session order.
std::vector<Fold> make_loso_splits(const std::vector<UtteranceRecord>& records,
                                   std::size_t n_folds = 5);

/// Sets `split` on every record for one fold: records of the held-out session
/// become validation (hrl_language) or test (every other language); all others
/// become train.
std::vector<UtteranceRecord> assign_fold_splits(
    const std::vector<UtteranceRecord>& records, const std::string& session,
    const std::string& hrl_language);

void validate_records(const std::vector<UtteranceRecord>& records);

std::string to_json_line(const UtteranceRecord& r);
UtteranceRecord from_json_line(std::string_view line);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<UtteranceRecord>& records);
std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path);

}  // namespace manifest

enum class CorpusRoleKind { kHrlLabeled, kLrlUnlabeled, kLrlEval };

struct CorpusRole {
  CorpusRoleKind role;
  std::vector<UtteranceRecord> records;
};

/// Enforces the per-role label requirements.
void validate_role(const CorpusRole& role);

// ---------------------------------------------------------------------------
// Synthetic cross-lingual corpus

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct ClassProsody {
  Range pitch_hz;         // mean fundamental before speaker/domain offsets
  Range pitch_var_hz;     // depth of the pitch contour excursion
  Range rms;              // target RMS of the clip
  Range mod_rate_hz;      // amplitude-modulation (syllable) rate
};

struct LanguageDomain {
  std::string tag;
  double base_pitch_offset_hz = 0.0;
  /// Harmonic k is attenuated by tilt_db_per_octave * log2(k) dB.
  double tilt_db_per_octave = 0.0;
};

struct SynthCorpusConfig {
  int n_speakers = 40;
  int utterances_per_speaker = 25;
  int n_sessions = 5;
  std::vector<LanguageDomain> languages;
  std::array<ClassProsody, kNumEmotions> class_prosody;
  std::uint64_t seed = 0;
  int sample_rate = 16000;
  Range duration_s{2.0, 4.0};
  double speaker_offset_span_hz = 30.0;
  /// Fraction of speakers assigned the majority (male, negative offset) group.
  double male_fraction = 0.86;
  int n_harmonics = 12;
  /// Recording noise floor: white noise at an SNR drawn per utterance.
  Range background_snr_db{25.0, 35.0};

  static SynthCorpusConfig defaults();
  void validate() const;
};

struct SynthCorpus {
  std::vector<UtteranceRecord> records;
  std::filesystem::path manifest_path;
};

/// Renders one utterance's waveform. Pure function of (config, record index).
std::vector<float> synthesize_utterance(const SynthCorpusConfig& config,
                                        std::size_t domain, int speaker,
                                        int utterance, Emotion emotion,
                                        double duration_s);

/// Writes audio/<language>/<id>.wav plus manifest.jsonl under out_dir.
SynthCorpus generate_synth_corpus(const SynthCorpusConfig& config,
                                  const std::filesystem::path& out_dir);

}  // namespace serlab
