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
#include <string>
#include <unordered_map>
#include <vector>

#include "serlab/augment.hpp"
#include "serlab/dsp.hpp"
#include "serlab/manifest.hpp"

namespace serlab::features {

/// Audio path of a record; relative paths resolve against `root`.
std::filesystem::path resolve_audio(const std::filesystem::path& root, const UtteranceRecord& record);

/// Decoded audio (16 kHz) and clean log-mels keyed by record id, plus an
/// optional bank of waveform-augmented spectrograms.
class FeatureStore {
 public:
  explicit FeatureStore(std::filesystem::path audio_root, dsp::FrontEndParams params = {});

  /// Loads every record not yet present. With keep_audio the waveform is
  /// retained for on-the-fly waveform augmentation.
  void load(const std::vector<UtteranceRecord>& records, bool keep_audio);

  bool contains(const std::string& id) const { return items_.count(id) > 0; }
  const dsp::MelSpectrogram& clean(const std::string& id) const;
  const dsp::AudioClip& audio(const std::string& id) const;
  const dsp::FrontEndParams& params() const { return params_; }
  const std::filesystem::path& audio_root() const { return root_; }

  /// Precomputes `variants` waveform-augmented spectrograms per record (noise,
  /// polarity, gain, speed, then log-mel). Variant k of a record depends only
  /// on (seed, record id, k).
  void build_variants(const std::vector<UtteranceRecord>& records, const augment::AugmentSpec& spec,
                      std::size_t variants, std::uint64_t seed);
  std::size_t variant_count() const { return n_variants_; }
  const dsp::MelSpectrogram& variant(const std::string& id, std::size_t k) const;
  void clear_variants();

 private:
  struct Item {
    dsp::AudioClip audio;
    dsp::MelSpectrogram clean;
    std::vector<dsp::MelSpectrogram> variants;
  };
  const Item& item(const std::string& id) const;

  std::filesystem::path root_;
  dsp::FrontEndParams params_;
  std::unordered_map<std::string, Item> items_;
  std::size_t n_variants_ = 0;
  std::uint64_t variant_seed_ = 0;
  std::uint64_t variant_spec_hash_ = 0;
};

/// Waveform-augmented then spectrogram-augmented view of a record. Uses the
/// variant bank when one is built, otherwise augments the stored audio.
dsp::MelSpectrogram augmented_view(const FeatureStore& store, const UtteranceRecord& record,
                                   const augment::AugmentSpec& spec, RngStream& rng,
                                   dsp::LogMelExtractor& extractor);

std::uint64_t hash_augment_spec(const augment::AugmentSpec& spec);

}  // namespace serlab::features
