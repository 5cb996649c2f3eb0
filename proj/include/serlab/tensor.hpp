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
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace serlab {
class RngStream;
}

namespace serlab::tensor {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  T item() const;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
  bool operator==(const Tensor&) const = default;
};

/// Named parameter arrays with per-entry frozen flags and AdamW state.
template <typename T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    bool frozen = false;
    Tensor<T> m;  // first moment
    Tensor<T> v;  // second moment
    std::int64_t step = 0;
  };

  void add(std::string name, Tensor<T> value, bool frozen = false);
  bool contains(std::string_view name) const;
  Entry& entry(std::string_view name);
  const Entry& entry(std::string_view name) const;
  Tensor<T>& value(std::string_view name) { return entry(name).value; }
  const Tensor<T>& value(std::string_view name) const { return entry(name).value; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::vector<std::string> names() const;
  std::size_t parameter_count() const;

  /// Entries whose names start with any of the prefixes, in store order.
  ParameterStore subset(const std::vector<std::string>& prefixes) const;
  void reset_optimizer_state();

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>(), e.frozen);
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
using GradientMap = std::map<std::string, Tensor<T>>;

template <typename T>
class Tape;

/// Handle to a node on a Tape.
template <typename T>
class Var {
 public:
  Var() = default;
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape; }
  /// Accumulated gradient; empty until backward() reaches this node.
  const Tensor<T>& grad() const;
  bool requires_grad() const;
  std::uint32_t id() const { return id_; }
  Tape<T>* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::uint32_t id) : tape_(tape), id_(id) {}
  Tape<T>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

template <typename T>
struct BackwardContext {
  const Tensor<T>& out_value;
  const Tensor<T>& out_grad;
  std::vector<const Tensor<T>*> parent_values;
  /// nullptr for parents that do not require a gradient. Ops accumulate (+=).
  std::vector<Tensor<T>*> parent_grads;
};

/// Reverse-mode tape. Nodes are appended in creation order, which is a
/// topological order, so backward() is a single reverse sweep.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(BackwardContext<T>&)>;

  /// With grad_enabled false every leaf is a constant and no closures are kept.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  Var<T> constant(Tensor<T> value);
  Var<T> variable(Tensor<T> value);
  /// Leaf bound to a store entry. Frozen entries are bound as non-differentiable
  /// leaves. Repeated calls for the same (store, name) return the same node.
  Var<T> parameter(const ParameterStore<T>& store, const std::string& name);

  Var<T> record(const char* op, std::vector<Var<T>> parents, Tensor<T> value, BackwardFn backward);

  void backward(const Var<T>& loss);
  /// Gradients for every non-frozen entry of `store` bound on this tape.
  GradientMap<T> gradients(const ParameterStore<T>& store) const;

  std::size_t size() const { return nodes_.size(); }
  const char* op(const Var<T>& v) const { return nodes_.at(v.id()).op; }

 private:
  friend class Var<T>;
  struct Node {
    const char* op = "";
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::uint32_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };
  Var<T> push(Node node);

  bool grad_enabled_ = true;
  std::deque<Node> nodes_;
  std::map<std::pair<const void*, std::string>, std::uint32_t> bound_;
};

// ---------------------------------------------------------------------------
// Differentiable primitives. Shape errors throw std::invalid_argument naming
// both shapes.

/// [N, K] x [K, M].
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
/// x[..., K] x w[K, M] (+ bias[M]).
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& w);
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias);
/// Batched [B, N, K] x [B, K, M], or x [B, M, K]^T when transpose_b.
template <typename T> Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b = false);
/// x[B, T, Cin] with w[K, Cin, Cout], bias[Cout]; zero padding on both ends.
template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int padding);
/// Elementwise; b may also match the trailing dimensions of a (broadcast).
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, double c);
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps = 1e-5);
template <typename T> Var<T> gelu(const Var<T>& x);
template <typename T> Var<T> relu(const Var<T>& x);
template <typename T> Var<T> softmax(const Var<T>& x);
template <typename T> Var<T> log_softmax(const Var<T>& x);
/// x[B, T, D] -> [B, D]. With lengths, averages only the first lengths[b] steps.
template <typename T>
Var<T> mean_pool_time(const Var<T>& x, std::span<const std::size_t> lengths = {});
/// Inverted dropout; identity when !train or rate == 0.
template <typename T> Var<T> dropout(const Var<T>& x, double rate, bool train, RngStream* rng);
template <typename T> Var<T> l2_normalize(const Var<T>& x);
/// x[B, D]: per-feature standardization with batch statistics.
template <typename T> Var<T> batch_standardize(const Var<T>& x, double eps = 1e-5);

/// C = alpha * op(A) * op(B) + beta * C, row-major.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

}  // namespace serlab::tensor
