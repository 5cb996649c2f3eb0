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

#include "serlab/features.hpp"

#include <cstring>
#include <mutex>
#include <stdexcept>

#include "serlab/parallel.hpp"
#include "serlab/rng.hpp"

namespace serlab::features {

std::filesystem::path resolve_audio(const std::filesystem::path& root, const UtteranceRecord& record) {
  std::filesystem::path p(record.audio_path);
  return p.is_absolute() ? p : root / p;
}

FeatureStore::FeatureStore(std::filesystem::path audio_root, dsp::FrontEndParams params)
    : root_(std::move(audio_root)), params_(params) {}

void FeatureStore::load(const std::vector<UtteranceRecord>& records, bool keep_audio) {
  std::vector<const UtteranceRecord*> todo;
  for (const auto& r : records) {
    auto it = items_.find(r.id);
    if (it == items_.end() || (keep_audio && it->second.audio.samples.empty())) todo.push_back(&r);
  }
  // de-duplicate ids within this call
  std::unordered_map<std::string, std::size_t> seen;
  std::vector<const UtteranceRecord*> unique;
  for (auto* r : todo)
    if (seen.emplace(r->id, unique.size()).second) unique.push_back(r);

  std::vector<Item> loaded(unique.size());
  parallel_for(unique.size(), [&](std::size_t i) {
    dsp::AudioClip clip = dsp::load_audio(resolve_audio(root_, *unique[i]));
    if (clip.sample_rate != params_.sample_rate) clip = dsp::resample(clip, params_.sample_rate);
    dsp::LogMelExtractor extractor(params_);
    loaded[i].clean = extractor(clip);
    if (keep_audio) loaded[i].audio = std::move(clip);
  });
  for (std::size_t i = 0; i < unique.size(); ++i) {
    auto& slot = items_[unique[i]->id];
    slot.clean = std::move(loaded[i].clean);
    if (keep_audio) slot.audio = std::move(loaded[i].audio);
  }
}

const FeatureStore::Item& FeatureStore::item(const std::string& id) const {
  auto it = items_.find(id);
  if (it == items_.end()) throw std::invalid_argument("feature store: record '" + id + "' not loaded");
  return it->second;
}

const dsp::MelSpectrogram& FeatureStore::clean(const std::string& id) const { return item(id).clean; }

const dsp::AudioClip& FeatureStore::audio(const std::string& id) const {
  const auto& it = item(id);
  if (it.audio.samples.empty()) throw std::invalid_argument("feature store: audio for '" + id + "' not retained");
  return it.audio;
}

std::uint64_t hash_augment_spec(const augment::AugmentSpec& s) {
  std::string key;
  auto add = [&key](double v) { key.append(reinterpret_cast<const char*>(&v), sizeof v); };
  for (double v : {s.noise_snr_db.lo, s.noise_snr_db.hi, s.polarity_prob, s.gain_db.lo, s.gain_db.hi, s.speed.lo,
                   s.speed.hi, s.stretch.lo, s.stretch.hi, static_cast<double>(s.n_freq_masks),
                   static_cast<double>(s.max_freq_width), static_cast<double>(s.n_time_masks),
                   static_cast<double>(s.max_time_width), s.mixup_max_ratio, s.rrc_freq_scale.lo, s.rrc_freq_scale.hi,
                   s.rrc_time_scale.lo, s.rrc_time_scale.hi, static_cast<double>(s.strength)}) {
    add(v);
  }
  return fnv1a64(key);
}

void FeatureStore::build_variants(const std::vector<UtteranceRecord>& records, const augment::AugmentSpec& spec,
                                  std::size_t variants, std::uint64_t seed) {
  const std::uint64_t spec_hash = hash_augment_spec(spec);
  if (variants == 0) {
    clear_variants();
    return;
  }
  if (n_variants_ != variants || variant_seed_ != seed || variant_spec_hash_ != spec_hash) clear_variants();
  n_variants_ = variants;
  variant_seed_ = seed;
  variant_spec_hash_ = spec_hash;

  std::vector<std::pair<std::string, Item*>> todo;
  std::unordered_map<std::string, bool> seen;
  for (const auto& r : records) {
    if (!seen.emplace(r.id, true).second) continue;
    Item& it = items_.at(r.id);
    if (it.variants.size() == variants) continue;
    if (it.audio.samples.empty()) throw std::invalid_argument("build_variants: audio for '" + r.id + "' not retained");
    todo.emplace_back(r.id, &it);
  }
  parallel_for(todo.size(), [&](std::size_t i) {
    dsp::LogMelExtractor extractor(params_);
    Item& it = *todo[i].second;
    std::vector<dsp::MelSpectrogram> out;
    out.reserve(variants);
    const std::uint64_t key = fnv1a64(todo[i].first);
    for (std::size_t k = 0; k < variants; ++k) {
      RngStream rng = RngStream(seed).split("wave_variant", key, k);
      out.push_back(extractor(augment::augment_waveform(it.audio, spec, rng)));
    }
    it.variants = std::move(out);
  });
}

const dsp::MelSpectrogram& FeatureStore::variant(const std::string& id, std::size_t k) const {
  const auto& it = item(id);
  if (k >= it.variants.size()) throw std::out_of_range("feature store: variant out of range for '" + id + "'");
  return it.variants[k];
}

void FeatureStore::clear_variants() {
  for (auto& [id, it] : items_) it.variants.clear();
  n_variants_ = 0;
}

dsp::MelSpectrogram augmented_view(const FeatureStore& store, const UtteranceRecord& record,
                                   const augment::AugmentSpec& spec, RngStream& rng,
                                   dsp::LogMelExtractor& extractor) {
  if (store.variant_count() > 0) {
    const auto k = static_cast<std::size_t>(rng.uniform_int(store.variant_count()));
    return augment::augment_spectrogram(store.variant(record.id, k), spec, rng);
  }
  return augment::augment_spectrogram(extractor(augment::augment_waveform(store.audio(record.id), spec, rng)),
                                      spec, rng);
}

}  // namespace serlab::features
