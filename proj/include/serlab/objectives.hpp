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
#include <span>
#include <string>

#include "serlab/tensor.hpp"

namespace serlab::objectives {

using tensor::Tensor;
using tensor::Var;

enum class Denominator { kIncludePositive, kNegativesOnly };

std::string to_string(Denominator d);
Denominator parse_denominator(const std::string& text);

struct ContrastiveConfig {
  double temperature = 0.1;
  Denominator denominator = Denominator::kIncludePositive;

  void validate() const;
};

/// Speaker-contrastive loss over z[N, D] with cosine similarity. Every ordered
/// pair (i, j), i != j, with the same speaker is a positive; negatives of i are
/// all items with a different speaker. When `positive_groups` is given, a pair
/// is positive only if it also shares a group (e.g. the same utterance); the
/// negatives are unchanged. Returns the mean over positive pairs.
template <typename T>
Var<T> nt_xent(const Var<T>& z, std::span<const std::int64_t> speakers, const ContrastiveConfig& config,
               std::span<const std::int64_t> positive_groups = {});

/// Mean negative log-likelihood. With class weights, a weighted mean
/// normalized by the summed weights of the batch labels.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels,
                     std::span<const double> class_weights = {});

/// Mean over the batch of 2 - 2 cos(q_i, target_i). Targets are plain tensors:
/// no gradient can reach them.
template <typename T>
Var<T> byol_regression(const Var<T>& q, const Tensor<T>& target);

/// Symmetrized loss: average of the two view directions, in [0, 4].
template <typename T>
Var<T> byol_loss(const Var<T>& q_a, const Tensor<T>& target_b, const Var<T>& q_b, const Tensor<T>& target_a);

/// (1 - lambda) * ce + lambda * byol.
template <typename T>
Var<T> mixed_loss(const Var<T>& ce, const Var<T>& byol, double lambda);
double mixed_loss(double ce, double byol, double lambda);

struct MixedLossSchedule {
  double lambda_start = 0.8;
  double lambda_end = 0.2;
  std::int64_t total_steps = 1;

  void validate() const;
};

/// Linear interpolation from lambda_start at step 0 to lambda_end at step T - 1.
double lambda_at(std::int64_t step, const MixedLossSchedule& schedule);

}  // namespace serlab::objectives
