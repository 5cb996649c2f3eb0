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
#include <vector>

#include "serlab/tensor.hpp"

namespace serlab::optim {

using tensor::GradientMap;
using tensor::ParameterStore;
using tensor::Tensor;

struct AdamWConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void validate() const;
};

/// One AdamW step over every unfrozen entry. Gradients for frozen entries are
/// ignored. Throws when an unfrozen entry has no gradient.
template <typename T>
void adamw_step(ParameterStore<T>& store, const GradientMap<T>& grads, const AdamWConfig& config);

template <typename T>
struct OnlineTargetPair {
  ParameterStore<T> online;
  ParameterStore<T> target;
  double momentum = 0.99;
};

/// target <- m * target + (1 - m) * online for every target entry.
template <typename T>
void ema_update(ParameterStore<T>& target, const ParameterStore<T>& online, double momentum);

template <typename T>
void ema_update(OnlineTargetPair<T>& pair) {
  ema_update(pair.target, pair.online, pair.momentum);
}

/// Cosine ramp from base momentum to 1 over total_steps.
double cosine_momentum(double base, std::int64_t step, std::int64_t total_steps);

// Binary parameter files ("SERK"). Frozen flags are not stored here; they live
// in the checkpoint sidecar.
inline constexpr std::uint32_t kParameterFormatVersion = 1;

std::vector<std::uint8_t> encode_parameters(const ParameterStore<float>& store);
ParameterStore<float> decode_parameters(const std::vector<std::uint8_t>& bytes);
void write_parameters(const std::filesystem::path& path, const ParameterStore<float>& store);
ParameterStore<float> read_parameters(const std::filesystem::path& path);

/// Moments as "<name>/m", "<name>/v" and the step count as "<name>/step".
ParameterStore<float> optimizer_state(const ParameterStore<float>& store);
void restore_optimizer_state(ParameterStore<float>& store, const ParameterStore<float>& state);

}  // namespace serlab::optim
