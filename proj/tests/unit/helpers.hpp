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

#include <filesystem>
#include <vector>

#include "serlab/manifest.hpp"
#include "serlab/pipelines.hpp"

namespace serlab::testing {

/// Small synthetic corpus (2 domains x 10 speakers x 8 utterances, 5
/// sessions, 1.0-1.4 s), generated once per process.
const SynthCorpus& tiny_corpus();
std::filesystem::path scratch_dir(const std::string& name);

/// Fold-0 corpora of tiny_corpus().
pipelines::CorpusSet tiny_corpora();

/// A training config sized for the tiny corpus.
pipelines::TrainConfig tiny_config(pipelines::Mode mode, std::uint64_t seed = 1);

}  // namespace serlab::testing
