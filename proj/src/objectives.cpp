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

#include "serlab/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace serlab::objectives {

std::string to_string(Denominator d) {
  return d == Denominator::kIncludePositive ? "include_positive" : "negatives_only";
}

Denominator parse_denominator(const std::string& text) {
  if (text == "include_positive") return Denominator::kIncludePositive;
  if (text == "negatives_only") return Denominator::kNegativesOnly;
  throw std::invalid_argument("unknown denominator mode: " + text);
}

void ContrastiveConfig::validate() const {
  if (!(temperature > 0.0)) throw std::invalid_argument("nt_xent: temperature must be positive");
}

template <typename T>
Var<T> nt_xent(const Var<T>& z, std::span<const std::int64_t> speakers, const ContrastiveConfig& config,
               std::span<const std::int64_t> positive_groups) {
  config.validate();
  if (z.shape().size() != 2) throw std::invalid_argument("nt_xent: expected [N, D] embeddings");
  const std::size_t n = z.shape()[0];
  if (speakers.size() != n) throw std::invalid_argument("nt_xent: speaker labels do not match the batch");
  if (!positive_groups.empty() && positive_groups.size() != n) {
    throw std::invalid_argument("nt_xent: positive groups do not match the batch");
  }
  if (std::all_of(speakers.begin(), speakers.end(), [&](auto s) { return s == speakers[0]; })) {
    throw std::invalid_argument("nt_xent: batch has a single speaker, so there are no negatives");
  }

  Var<T> y = tensor::l2_normalize(z);
  const auto& yv = y.value().data;
  const std::size_t d = z.shape()[1];
  const double inv_tau = 1.0 / config.temperature;
  const bool include_positive = config.denominator == Denominator::kIncludePositive;

  std::vector<double> s(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += static_cast<double>(yv[i * d + c]) * yv[k * d + c];
      s[i * n + k] = dot * inv_tau;
    }

  struct Pair {
    std::size_t i, j;
  };
  std::vector<Pair> pairs;
  std::vector<std::vector<std::size_t>> negatives(n);
  for (std::size_t i = 0; i < n; ++i) {
    bool has_positive = false;
    for (std::size_t k = 0; k < n; ++k) {
      if (speakers[k] != speakers[i]) {
        negatives[i].push_back(k);
      } else if (k != i && (positive_groups.empty() || positive_groups[k] == positive_groups[i])) {
        pairs.push_back({i, k});
        has_positive = true;
      }
    }
    if (!has_positive) {
      throw std::invalid_argument("nt_xent: item " + std::to_string(i) + " has no positive partner");
    }
  }

  // ds accumulates dLoss/ds for the backward pass.
  std::vector<double> ds(n * n, 0.0);
  const double inv_pairs = 1.0 / static_cast<double>(pairs.size());
  double total = 0.0;
  for (const auto& [i, j] : pairs) {
    double mx = include_positive ? s[i * n + j] : -INFINITY;
    for (auto k : negatives[i]) mx = std::max(mx, s[i * n + k]);
    double denom = include_positive ? std::exp(s[i * n + j] - mx) : 0.0;
    for (auto k : negatives[i]) denom += std::exp(s[i * n + k] - mx);
    const double log_d = mx + std::log(denom);
    total += log_d - s[i * n + j];
    ds[i * n + j] -= inv_pairs;
    if (include_positive) ds[i * n + j] += inv_pairs * std::exp(s[i * n + j] - log_d);
    for (auto k : negatives[i]) ds[i * n + k] += inv_pairs * std::exp(s[i * n + k] - log_d);
  }
  Tensor<T> out({1}, static_cast<T>(total * inv_pairs));
  return z.tape()->record("nt_xent", {y}, std::move(out),
                          [n, d, inv_tau, ds = std::move(ds)](tensor::BackwardContext<T>& c) {
                            const double g = c.out_grad.data[0];
                            const auto& yv = c.parent_values[0]->data;
                            auto& gy = c.parent_grads[0]->data;
                            for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t k = 0; k < n; ++k) {
                                const double w = ds[i * n + k];
                                if (w == 0.0) continue;
                                const double f = g * w * inv_tau;
                                for (std::size_t ch = 0; ch < d; ++ch) {
                                  gy[i * d + ch] += static_cast<T>(f * yv[k * d + ch]);
                                  gy[k * d + ch] += static_cast<T>(f * yv[i * d + ch]);
                                }
                              }
                          });
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels, std::span<const double> class_weights) {
  const auto& shape = logits.shape();
  if (shape.size() != 2) throw std::invalid_argument("cross_entropy: expected [B, C] logits");
  const std::size_t b = shape[0], c = shape[1];
  if (labels.size() != b) throw std::invalid_argument("cross_entropy: label count does not match the batch");
  if (b == 0) throw std::invalid_argument("cross_entropy: empty batch");
  if (!class_weights.empty() && class_weights.size() != c) {
    throw std::invalid_argument("cross_entropy: class_weights size does not match the class count");
  }
  const auto& x = logits.value().data;
  std::vector<double> probs(b * c);
  std::vector<double> w(b, 1.0);
  double total = 0.0, wsum = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= c) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(labels[r]) + " out of range");
    }
    const T* row = x.data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] = std::exp(row[j] - lse);
    if (!class_weights.empty()) w[r] = class_weights[static_cast<std::size_t>(labels[r])];
    total += w[r] * (lse - row[labels[r]]);
    wsum += w[r];
  }
  if (!(wsum > 0.0)) throw std::invalid_argument("cross_entropy: class weights sum to zero for this batch");
  std::vector<int> lab(labels.begin(), labels.end());
  return logits.tape()->record(
      "cross_entropy", {logits}, Tensor<T>({1}, static_cast<T>(total / wsum)),
      [b, c, wsum, probs = std::move(probs), w = std::move(w), lab = std::move(lab)](tensor::BackwardContext<T>& ctx) {
        const double g = ctx.out_grad.data[0];
        auto& gx = ctx.parent_grads[0]->data;
        for (std::size_t r = 0; r < b; ++r) {
          const double f = g * w[r] / wsum;
          for (std::size_t j = 0; j < c; ++j) {
            const double onehot = static_cast<int>(j) == lab[r] ? 1.0 : 0.0;
            gx[r * c + j] += static_cast<T>(f * (probs[r * c + j] - onehot));
          }
        }
      });
}

template <typename T>
Var<T> byol_regression(const Var<T>& q, const Tensor<T>& target) {
  const auto& shape = q.shape();
  if (shape.size() != 2 || target.shape != shape) {
    throw std::invalid_argument("byol_loss: prediction " + tensor::shape_string(shape) + " and target " +
                                tensor::shape_string(target.shape) + " differ");
  }
  const std::size_t b = shape[0], d = shape[1];
  if (b == 0) throw std::invalid_argument("byol_loss: empty batch");
  const auto& qv = q.value().data;
  std::vector<double> qn(b), cosv(b), that(b * d);
  double total = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    double qq = 0.0, tt = 0.0, qt = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double a = qv[r * d + j], t = target.data[r * d + j];
      qq += a * a;
      tt += t * t;
      qt += a * t;
    }
    if (qq == 0.0 || tt == 0.0) throw std::invalid_argument("byol_loss: zero-norm vector in row " + std::to_string(r));
    qn[r] = std::sqrt(qq);
    const double tn = std::sqrt(tt);
    cosv[r] = qt / (qn[r] * tn);
    for (std::size_t j = 0; j < d; ++j) that[r * d + j] = target.data[r * d + j] / tn;
    total += 2.0 - 2.0 * cosv[r];
  }
  return q.tape()->record(
      "byol_regression", {q}, Tensor<T>({1}, static_cast<T>(total / static_cast<double>(b))),
      [b, d, qn = std::move(qn), cosv = std::move(cosv), that = std::move(that)](tensor::BackwardContext<T>& c) {
        const double g = c.out_grad.data[0] / static_cast<double>(b);
        const auto& qv = c.parent_values[0]->data;
        auto& gq = c.parent_grads[0]->data;
        for (std::size_t r = 0; r < b; ++r) {
          for (std::size_t j = 0; j < d; ++j) {
            const double qhat = qv[r * d + j] / qn[r];
            gq[r * d + j] += static_cast<T>(g * (-2.0 / qn[r]) * (that[r * d + j] - cosv[r] * qhat));
          }
        }
      });
}

template <typename T>
Var<T> byol_loss(const Var<T>& q_a, const Tensor<T>& target_b, const Var<T>& q_b, const Tensor<T>& target_a) {
  return tensor::scale(tensor::add(byol_regression(q_a, target_b), byol_regression(q_b, target_a)), 0.5);
}

template <typename T>
Var<T> mixed_loss(const Var<T>& ce, const Var<T>& byol, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("mixed_loss: lambda must be in [0, 1]");
  if (lambda == 0.0) return ce;
  if (lambda == 1.0) return byol;
  return tensor::add(tensor::scale(ce, 1.0 - lambda), tensor::scale(byol, lambda));
}

double mixed_loss(double ce, double byol, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("mixed_loss: lambda must be in [0, 1]");
  if (lambda == 0.0) return ce;
  if (lambda == 1.0) return byol;
  return (1.0 - lambda) * ce + lambda * byol;
}

void MixedLossSchedule::validate() const {
  if (total_steps < 1) throw std::invalid_argument("lambda schedule: total_steps must be >= 1");
  if (lambda_start < 0.0 || lambda_start > 1.0 || lambda_end < 0.0 || lambda_end > 1.0) {
    throw std::invalid_argument("lambda schedule: endpoints must be in [0, 1]");
  }
}

double lambda_at(std::int64_t step, const MixedLossSchedule& schedule) {
  schedule.validate();
  if (step < 0 || step >= schedule.total_steps) {
    throw std::out_of_range("lambda_at: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(schedule.total_steps) + ")");
  }
  if (schedule.total_steps == 1) return schedule.lambda_start;
  // convex form keeps both endpoints exact
  const double u = static_cast<double>(step) / static_cast<double>(schedule.total_steps - 1);
  return schedule.lambda_start * (1.0 - u) + schedule.lambda_end * u;
}

#define SERLAB_OBJ_INSTANTIATE(T)                                                                        \
  template Var<T> nt_xent<T>(const Var<T>&, std::span<const std::int64_t>, const ContrastiveConfig&,     \
                             std::span<const std::int64_t>);                                             \
  template Var<T> cross_entropy<T>(const Var<T>&, std::span<const int>, std::span<const double>);        \
  template Var<T> byol_regression<T>(const Var<T>&, const Tensor<T>&);                                   \
  template Var<T> byol_loss<T>(const Var<T>&, const Tensor<T>&, const Var<T>&, const Tensor<T>&);        \
  template Var<T> mixed_loss<T>(const Var<T>&, const Var<T>&, double);

SERLAB_OBJ_INSTANTIATE(float)
SERLAB_OBJ_INSTANTIATE(double)

#undef SERLAB_OBJ_INSTANTIATE

}  // namespace serlab::objectives
