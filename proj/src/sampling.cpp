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

#include "serlab/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "serlab/rng.hpp"

namespace serlab::sampling {

void SpeakerBatchSpec::validate() const {
  if (n_speakers < 2) throw std::invalid_argument("speaker batches need at least 2 speakers");
  if (utterances_per_speaker < 2) throw std::invalid_argument("speaker batches need at least 2 utterances per speaker");
}

void BalancedBatchSpec::validate() const {
  if (n_classes == 0 || batch_size == 0) throw std::invalid_argument("balanced batches: sizes must be positive");
  if (batch_size % n_classes != 0) {
    throw std::invalid_argument("balanced batches: batch_size " + std::to_string(batch_size) +
                                " is not divisible by " + std::to_string(n_classes) + " classes");
  }
}

SpeakerSampler::SpeakerSampler(const std::vector<UtteranceRecord>& records, SpeakerBatchSpec spec,
                               std::uint64_t seed)
    : spec_(spec), seed_(seed) {
  spec_.validate();
  std::map<std::string, std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < records.size(); ++i) by_speaker[records[i].speaker_id].push_back(i);
  for (auto& [id, idx] : by_speaker) {
    if (idx.size() < spec_.utterances_per_speaker) continue;
    speaker_ids_.push_back(id);
    speakers_.push_back(std::move(idx));
  }
  if (speakers_.size() < spec_.n_speakers) {
    throw std::invalid_argument("speaker batches: " + std::to_string(speakers_.size()) +
                                " eligible speakers (with >= " + std::to_string(spec_.utterances_per_speaker) +
                                " utterances), need " + std::to_string(spec_.n_speakers) + "; short by " +
                                std::to_string(spec_.n_speakers - speakers_.size()));
  }
}

Batch SpeakerSampler::batch(std::uint64_t epoch, std::uint64_t index) const {
  RngStream rng = RngStream(seed_).split("speaker_batch", epoch, index);
  std::vector<std::size_t> order(speakers_.size());
  std::iota(order.begin(), order.end(), 0);
  // partial Fisher-Yates: the first n_speakers slots are a uniform sample
  for (std::size_t i = 0; i < spec_.n_speakers; ++i) {
    std::swap(order[i], order[i + rng.uniform_int(order.size() - i)]);
  }
  Batch out;
  out.reserve(spec_.batch_size());
  for (std::size_t s = 0; s < spec_.n_speakers; ++s) {
    std::vector<std::size_t> utts = speakers_[order[s]];
    for (std::size_t i = 0; i < spec_.utterances_per_speaker; ++i) {
      std::swap(utts[i], utts[i + rng.uniform_int(utts.size() - i)]);
      out.push_back(utts[i]);
    }
  }
  return out;
}

std::vector<Batch> SpeakerSampler::epoch(std::uint64_t epoch, std::size_t n_batches) const {
  std::vector<Batch> out;
  for (std::size_t b = 0; b < n_batches; ++b) out.push_back(batch(epoch, b));
  return out;
}

BalancedSampler::BalancedSampler(const std::vector<UtteranceRecord>& records, BalancedBatchSpec spec,
                                 std::uint64_t seed)
    : spec_(spec), seed_(seed), pools_(spec.n_classes) {
  spec_.validate();
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].emotion) continue;
    const auto cls = static_cast<std::size_t>(*records[i].emotion);
    if (cls >= spec_.n_classes) throw std::invalid_argument("balanced batches: class index out of range");
    pools_[cls].push_back(i);
  }
  for (std::size_t c = 0; c < pools_.size(); ++c) {
    if (pools_[c].empty()) {
      throw std::invalid_argument("balanced batches: class '" +
                                  std::string(to_string(static_cast<Emotion>(c))) + "' has no records");
    }
  }
}


Batch BalancedSampler::batch(std::uint64_t epoch, std::uint64_t index) const {
  const std::size_t k = spec_.per_class();
  Batch out;
  out.reserve(spec_.batch_size);
  for (std::size_t c = 0; c < pools_.size(); ++c) {
    const auto& pool = pools_[c];
    const std::uint64_t start = index * k;
    // one permutation per pass, reused for consecutive positions in that pass
    std::uint64_t cached_pass = UINT64_MAX;
    std::vector<std::size_t> perm;
    for (std::uint64_t pos = start; pos < start + k; ++pos) {
      const std::uint64_t pass = pos / pool.size();
      if (pass != cached_pass) {
        RngStream rng = RngStream(seed_).split("balanced_pass", epoch * 1000003ULL + c, pass);
        perm = pool;
        rng.shuffle(perm.begin(), perm.end());
        cached_pass = pass;
      }
      out.push_back(perm[pos % pool.size()]);
    }
  }
  return out;
}

std::vector<Batch> BalancedSampler::epoch(std::uint64_t epoch, std::size_t n_batches) const {
  std::vector<Batch> out;
  for (std::size_t b = 0; b < n_batches; ++b) out.push_back(batch(epoch, b));
  return out;
}

MixedSourceSampler::MixedSourceSampler(const std::vector<UtteranceRecord>& hrl,
                                       const std::vector<UtteranceRecord>& lrl, BalancedBatchSpec spec,
                                       std::size_t ssl_batch_size, std::uint64_t seed, double lrl_probability)
    : balanced_(hrl.empty() ? throw std::invalid_argument("mixed-source batches: HRL source is empty")
                            : BalancedSampler(hrl, spec, seed)),
      n_hrl_(hrl.size()),
      n_lrl_(lrl.size()),
      ssl_batch_size_(ssl_batch_size),
      seed_(seed),
      lrl_probability_(lrl_probability) {
  if (lrl.empty()) throw std::invalid_argument("mixed-source batches: LRL source is empty");
  if (ssl_batch_size == 0) throw std::invalid_argument("mixed-source batches: ssl batch size must be positive");
  if (lrl_probability < 0.0 || lrl_probability > 1.0) {
    throw std::invalid_argument("mixed-source batches: LRL probability must be in [0, 1]");
  }
}

MixedBatch MixedSourceSampler::batch(std::uint64_t epoch, std::uint64_t index) const {
  MixedBatch out;
  out.hrl = balanced_.batch(epoch, index);
  RngStream rng = RngStream(seed_).split("ssl_batch", epoch, index);
  out.ssl.reserve(ssl_batch_size_);
  for (std::size_t i = 0; i < ssl_batch_size_; ++i) {
    if (rng.bernoulli(lrl_probability_)) {
      out.ssl.push_back({Source::kLrl, static_cast<std::size_t>(rng.uniform_int(n_lrl_))});
    } else {
      out.ssl.push_back({Source::kHrl, static_cast<std::size_t>(rng.uniform_int(n_hrl_))});
    }
  }
  return out;
}

}  // namespace serlab::sampling
