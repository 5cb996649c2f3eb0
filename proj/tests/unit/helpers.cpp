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

#include "helpers.hpp"

#include <unistd.h>

namespace serlab::testing {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("serlab_unit_" + std::to_string(::getpid())) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

const SynthCorpus& tiny_corpus() {
  static const SynthCorpus corpus = [] {
    SynthCorpusConfig c = SynthCorpusConfig::defaults();
    c.n_speakers = 10;
    c.utterances_per_speaker = 8;
    c.duration_s = {1.0, 1.4};
    c.seed = 11;
    return generate_synth_corpus(c, scratch_dir("tiny_corpus"));
  }();
  return corpus;
}

pipelines::CorpusSet tiny_corpora() {
  const auto& records = tiny_corpus().records;
  std::string first = records.front().session;
  for (const auto& r : records) first = std::min(first, r.session);
  return pipelines::corpus_from_splits(manifest::assign_fold_splits(records, first, "hrl"), "hrl");
}

pipelines::TrainConfig tiny_config(pipelines::Mode mode, std::uint64_t seed) {
  auto c = pipelines::TrainConfig::defaults(mode);
  c.seed = seed;
  c.batch_size = 16;
  c.batches_per_epoch = 3;
  c.max_epochs = 2;
  c.patience = 2;
  c.optimizer.lr = 1e-3;
  c.encoder.d_model = 16;
  c.encoder.n_blocks = 1;
  c.encoder.max_frames = 100;
  c.encoder.projector_hidden = 16;
  c.encoder.projector_dim = 8;
  c.validation_batches = 2;
  return c;
}

}  // namespace serlab::testing
