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
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "serlab/dsp.hpp"
#include "serlab/tensor.hpp"

namespace serlab {
class RngStream;
}

namespace serlab::model {

using tensor::ParameterStore;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

enum class BlockKind { kFeedforwardResidual, kSingleHeadAttention };

std::string to_string(BlockKind kind);
BlockKind parse_block_kind(const std::string& text);

struct EncoderConfig {
  int n_mels = 80;
  int d_model = 64;
  int n_blocks = 2;
  int conv_kernel = 3;
  int conv_stride = 2;
  int conv_padding = 1;
  int max_frames = 400;
  BlockKind block = BlockKind::kFeedforwardResidual;
  /// Average only over frames that came from real audio.
  bool mask_aware_pooling = false;
  double dropout = 0.1;
  int n_classes = 4;
  int projector_hidden = 128;
  int projector_dim = 32;

  void validate() const;
  /// Frames after the two strided convolutions.
  std::size_t conv_frames(std::size_t input_frames) const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  bool operator==(const EncoderConfig&) const = default;
};

/// Sinusoidal table [positions, channels]: sin in the first half, cos in the second.
template <typename T>
Tensor<T> positional_table(std::size_t positions, std::size_t channels);

template <typename T>
void init_encoder(ParameterStore<T>& store, const EncoderConfig& config, RngStream& rng);
template <typename T>
void init_head(ParameterStore<T>& store, const EncoderConfig& config, RngStream& rng);

enum class HeadRole { kProjector, kPredictor };

template <typename T>
void init_byol_head(ParameterStore<T>& store, const EncoderConfig& config, HeadRole role, RngStream& rng);

/// Encoder + classification head.
ParameterStore<float> make_classifier(const EncoderConfig& config, RngStream& rng);

/// Stacks spectrograms into [B, T, n_mels]. All inputs must share T <= max_frames.
template <typename T>
Tensor<T> batch_input(std::span<const dsp::MelSpectrogram* const> specs, const EncoderConfig& config);

/// x[B, T, n_mels] -> embeddings [B, d_model]. `lengths` are valid input frames
/// per item and only matter with mask-aware pooling.
template <typename T>
Var<T> encode(Tape<T>& tape, const ParameterStore<T>& params, const Var<T>& x, const EncoderConfig& config,
              bool train, RngStream* rng, std::span<const std::size_t> lengths = {});

template <typename T>
Var<T> classify(Tape<T>& tape, const ParameterStore<T>& params, const Var<T>& emb, const EncoderConfig& config,
                bool train, RngStream* rng);

template <typename T>
Var<T> project_predict(Tape<T>& tape, const ParameterStore<T>& params, const Var<T>& x, HeadRole role);

/// Eval-mode embeddings and logits for a list of spectrograms.
struct Inference {
  Tensor<float> embeddings;  // [N, d_model]
  Tensor<float> logits;      // [N, n_classes]; empty when the store has no head
};

Inference infer(const ParameterStore<float>& params, const EncoderConfig& config,
                std::span<const dsp::MelSpectrogram> specs, std::size_t batch_size = 64,
                std::span<const std::size_t> lengths = {});

std::vector<int> argmax_rows(const Tensor<float>& logits);

}  // namespace serlab::model
