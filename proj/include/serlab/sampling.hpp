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

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "serlab/manifest.hpp"

namespace serlab::sampling {

inline constexpr std::size_t kBatchesPerEpoch = 100;

/// Indices into the record list the sampler was built from.
using Batch = std::vector<std::size_t>;

struct SpeakerBatchSpec {
  std::size_t n_speakers = 16;
  std::size_t utterances_per_speaker = 4;

  std::size_t batch_size() const { return n_speakers * utterances_per_speaker; }
  void validate() const;
};

struct BalancedBatchSpec {
  std::size_t batch_size = 64;
  std::size_t n_classes = 4;

  std::size_t per_class() const { return batch_size / n_classes; }
  void validate() const;
};

/// n_speakers distinct speakers, each contributing utterances_per_speaker
/// distinct utterances. Speakers below the quota are not eligible.
class SpeakerSampler {
 public:
  SpeakerSampler(const std::vector<UtteranceRecord>& records, SpeakerBatchSpec spec, std::uint64_t seed);

  Batch batch(std::uint64_t epoch, std::uint64_t index) const;
  std::vector<Batch> epoch(std::uint64_t epoch, std::size_t n_batches = kBatchesPerEpoch) const;
  std::size_t eligible_speakers() const { return speakers_.size(); }
  const std::vector<std::string>& speaker_ids() const { return speaker_ids_; }

 private:
  SpeakerBatchSpec spec_;
  std::uint64_t seed_;
  std::vector<std::string> speaker_ids_;
  std::vector<std::vector<std::size_t>> speakers_;
};

/// Exactly per_class records of every class per batch. Each class is walked
/// through a fresh permutation per pass, so within an epoch usage counts of a
/// class's records differ by at most one.
class BalancedSampler {
 public:
  BalancedSampler(const std::vector<UtteranceRecord>& records, BalancedBatchSpec spec, std::uint64_t seed);

  Batch batch(std::uint64_t epoch, std::uint64_t index) const;
  std::vector<Batch> epoch(std::uint64_t epoch, std::size_t n_batches = kBatchesPerEpoch) const;
  const std::vector<std::vector<std::size_t>>& class_pools() const { return pools_; }

 private:
  BalancedBatchSpec spec_;
  std::uint64_t seed_;
  std::vector<std::vector<std::size_t>> pools_;
};

enum class Source : std::uint8_t { kHrl, kLrl };

struct SourcedIndex {
  Source source;
  std::size_t index;
  bool operator==(const SourcedIndex&) const = default;
};

struct MixedBatch {
  Batch hrl;                       // class-balanced, indices into the HRL records
  std::vector<SourcedIndex> ssl;   // unlabeled draws from HRL and LRL
};

/// One class-balanced HRL batch plus one self-supervised batch per step; each
/// self-supervised item comes from LRL with probability lrl_probability.
class MixedSourceSampler {
 public:
  MixedSourceSampler(const std::vector<UtteranceRecord>& hrl, const std::vector<UtteranceRecord>& lrl,
                     BalancedBatchSpec spec, std::size_t ssl_batch_size, std::uint64_t seed,
                     double lrl_probability = 0.5);

  MixedBatch batch(std::uint64_t epoch, std::uint64_t index) const;

 private:
  BalancedSampler balanced_;
  std::size_t n_hrl_;
  std::size_t n_lrl_;
  std::size_t ssl_batch_size_;
  std::uint64_t seed_;
  double lrl_probability_;
};

}  // namespace serlab::sampling
