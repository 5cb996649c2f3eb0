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

#include "serlab/tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "serlab/rng.hpp"

namespace serlab::tensor {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
  if (numel(shape) != data.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_string(shape) + " does not match " +
                                std::to_string(data.size()) + " values");
  }
}

template <typename T>
T Tensor<T>::item() const {
  if (data.size() != 1) throw std::invalid_argument("Tensor::item on shape " + shape_string(shape));
  return data[0];
}

template <>
void gemm<float>(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, float alpha,
                 const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta,
                 float* c, std::size_t ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

template <>
void gemm<double>(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
                  const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
                  double* c, std::size_t ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

// ---------------------------------------------------------------------------
// ParameterStore

template <typename T>
void ParameterStore<T>::add(std::string name, Tensor<T> value, bool frozen) {
  if (index_.count(name)) throw std::invalid_argument("ParameterStore: duplicate name " + name);
  index_.emplace(name, entries_.size());
  Entry e;
  e.name = std::move(name);
  e.value = std::move(value);
  e.frozen = frozen;
  entries_.push_back(std::move(e));
}

template <typename T>
bool ParameterStore<T>::contains(std::string_view name) const {
  return index_.count(std::string(name)) > 0;
}

template <typename T>
typename ParameterStore<T>::Entry& ParameterStore<T>::entry(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::invalid_argument("ParameterStore: no entry " + std::string(name));
  return entries_[it->second];
}

template <typename T>
const typename ParameterStore<T>::Entry& ParameterStore<T>::entry(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::invalid_argument("ParameterStore: no entry " + std::string(name));
  return entries_[it->second];
}

template <typename T>
std::vector<std::string> ParameterStore<T>::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

template <typename T>
ParameterStore<T> ParameterStore<T>::subset(const std::vector<std::string>& prefixes) const {
  ParameterStore out;
  for (const auto& e : entries_) {
    for (const auto& p : prefixes) {
      if (e.name.compare(0, p.size(), p) == 0) {
        out.entries_.push_back(e);
        out.index_.emplace(e.name, out.entries_.size() - 1);
        break;
      }
    }
  }
  return out;
}

template <typename T>
void ParameterStore<T>::reset_optimizer_state() {
  for (auto& e : entries_) {
    e.m = {};
    e.v = {};
    e.step = 0;
  }
}

// ---------------------------------------------------------------------------
// Tape

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->nodes_.at(id_).value;
}

template <typename T>
const Tensor<T>& Var<T>::grad() const {
  return tape_->nodes_.at(id_).grad;
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->nodes_.at(id_).requires_grad;
}

template <typename T>
Var<T> Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  Node n;
  n.op = "variable";
  n.value = std::move(value);
  n.requires_grad = grad_enabled_;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::parameter(const ParameterStore<T>& store, const std::string& name) {
  auto key = std::make_pair(static_cast<const void*>(&store), name);
  if (auto it = bound_.find(key); it != bound_.end()) return Var<T>(this, it->second);
  const auto& e = store.entry(name);
  Node n;
  n.op = "parameter";
  n.value = e.value;
  n.requires_grad = grad_enabled_ && !e.frozen;
  Var<T> v = push(std::move(n));
  bound_.emplace(std::move(key), v.id());
  return v;
}

template <typename T>
Var<T> Tape<T>::record(const char* op, std::vector<Var<T>> parents, Tensor<T> value,
                       BackwardFn backward) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (const auto& p : parents) {
    if (p.tape() != this) throw std::invalid_argument(std::string(op) + ": operand from another tape");
    n.parents.push_back(p.id());
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss from another tape");
  Node& root = nodes_.at(loss.id());
  if (root.value.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_string(root.value.shape));
  }
  for (auto& n : nodes_) n.grad = {};
  root.grad = Tensor<T>(root.value.shape, T(1));
  for (std::int64_t i = loss.id(); i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (!node.requires_grad || !node.backward || node.grad.data.empty()) continue;
    BackwardContext<T> ctx{node.value, node.grad, {}, {}};
    for (auto pid : node.parents) {
      Node& p = nodes_[pid];
      ctx.parent_values.push_back(&p.value);
      if (p.requires_grad) {
        if (p.grad.data.empty()) p.grad = Tensor<T>(p.value.shape, T(0));
        ctx.parent_grads.push_back(&p.grad);
      } else {
        ctx.parent_grads.push_back(nullptr);
      }
    }
    node.backward(ctx);
  }
}

template <typename T>
GradientMap<T> Tape<T>::gradients(const ParameterStore<T>& store) const {
  GradientMap<T> out;
  for (const auto& [key, id] : bound_) {
    if (key.first != &store) continue;
    const Node& n = nodes_[id];
    if (!n.requires_grad) continue;
    out.emplace(key.second, n.grad.data.empty() ? Tensor<T>(n.value.shape, T(0)) : n.grad);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Primitives

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_string(a) +
                              " and " + shape_string(b));
}

/// True when `b` equals the trailing dimensions of `a`.
bool trailing_match(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  return std::equal(b.begin(), b.end(), a.end() - static_cast<std::ptrdiff_t>(b.size()));
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) shape_error("matmul", av.shape, bv.shape);
  const std::size_t n = av.dim(0), k = av.dim(1), m = bv.dim(1);
  Tensor<T> out({n, m});
  gemm<T>(false, false, n, m, k, T(1), av.data.data(), k, bv.data.data(), m, T(0), out.data.data(), m);
  return a.tape()->record("matmul", {a, b}, std::move(out), [n, k, m](BackwardContext<T>& c) {
    const T* g = c.out_grad.data.data();
    if (c.parent_grads[0]) {
      gemm<T>(false, true, n, k, m, T(1), g, m, c.parent_values[1]->data.data(), m, T(1),
              c.parent_grads[0]->data.data(), k);
    }
    if (c.parent_grads[1]) {
      gemm<T>(true, false, k, m, n, T(1), c.parent_values[0]->data.data(), k, g, m, T(1),
              c.parent_grads[1]->data.data(), m);
    }
  });
}

namespace {

template <typename T>
Var<T> linear_impl(const Var<T>& x, const Var<T>& w, const Var<T>* bias) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  if (wv.rank() != 2 || xv.rank() < 1 || xv.shape.back() != wv.dim(0)) shape_error("linear", xv.shape, wv.shape);
  const std::size_t k = wv.dim(0), m = wv.dim(1), rows = xv.size() / k;
  if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != m)) {
    shape_error("linear(bias)", wv.shape, bias->value().shape);
  }
  Shape out_shape = xv.shape;
  out_shape.back() = m;
  Tensor<T> out(out_shape);
  if (bias) {
    const auto& bv = bias->value();
    for (std::size_t r = 0; r < rows; ++r) std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + r * m);
  }
  gemm<T>(false, false, rows, m, k, T(1), xv.data.data(), k, wv.data.data(), m, bias ? T(1) : T(0),
          out.data.data(), m);
  std::vector<Var<T>> parents{x, w};
  if (bias) parents.push_back(*bias);
  return x.tape()->record("linear", std::move(parents), std::move(out), [rows, k, m](BackwardContext<T>& c) {
    const T* g = c.out_grad.data.data();
    if (c.parent_grads[0]) {
      gemm<T>(false, true, rows, k, m, T(1), g, m, c.parent_values[1]->data.data(), m, T(1),
              c.parent_grads[0]->data.data(), k);
    }
    if (c.parent_grads[1]) {
      gemm<T>(true, false, k, m, rows, T(1), c.parent_values[0]->data.data(), k, g, m, T(1),
              c.parent_grads[1]->data.data(), m);
    }
    if (c.parent_grads.size() > 2 && c.parent_grads[2]) {
      std::vector<double> acc(m, 0.0);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < m; ++j) acc[j] += g[r * m + j];
      auto& gb = c.parent_grads[2]->data;
      for (std::size_t j = 0; j < m; ++j) gb[j] += static_cast<T>(acc[j]);
    }
  });
}

}  // namespace

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w) {
  return linear_impl<T>(x, w, nullptr);
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  return linear_impl<T>(x, w, &bias);
}

template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0)) shape_error("bmm", av.shape, bv.shape);
  const std::size_t batch = av.dim(0), n = av.dim(1), k = av.dim(2);
  const std::size_t m = transpose_b ? bv.dim(1) : bv.dim(2);
  if ((transpose_b ? bv.dim(2) : bv.dim(1)) != k) shape_error("bmm", av.shape, bv.shape);
  Tensor<T> out({batch, n, m});
  const std::size_t ldb = transpose_b ? k : m;
  for (std::size_t i = 0; i < batch; ++i) {
    gemm<T>(false, transpose_b, n, m, k, T(1), av.data.data() + i * n * k, k, bv.data.data() + i * k * m, ldb,
            T(0), out.data.data() + i * n * m, m);
  }
  return a.tape()->record("bmm", {a, b}, std::move(out), [=](BackwardContext<T>& c) {
    for (std::size_t i = 0; i < batch; ++i) {
      const T* g = c.out_grad.data.data() + i * n * m;
      const T* ap = c.parent_values[0]->data.data() + i * n * k;
      const T* bp = c.parent_values[1]->data.data() + i * k * m;
      if (c.parent_grads[0]) {
        // dA = dC * op(B)^T
        gemm<T>(false, !transpose_b, n, k, m, T(1), g, m, bp, ldb, T(1),
                c.parent_grads[0]->data.data() + i * n * k, k);
      }
      if (c.parent_grads[1]) {
        T* gb = c.parent_grads[1]->data.data() + i * k * m;
        if (transpose_b) {
          // B is [m, k]: dB = dC^T * A
          gemm<T>(true, false, m, k, n, T(1), g, m, ap, k, T(1), gb, k);
        } else {
          gemm<T>(true, false, k, m, n, T(1), ap, k, g, m, T(1), gb, m);
        }
      }
    }
  });
}

template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int padding) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  if (xv.rank() != 3 || wv.rank() != 3 || xv.dim(2) != wv.dim(1)) shape_error("conv1d", xv.shape, wv.shape);
  if (bias.value().rank() != 1 || bias.value().dim(0) != wv.dim(2)) {
    shape_error("conv1d(bias)", wv.shape, bias.value().shape);
  }
  if (stride <= 0 || padding < 0) throw std::invalid_argument("conv1d: invalid stride or padding");
  const std::size_t batch = xv.dim(0), t_in = xv.dim(1), cin = xv.dim(2);
  const std::size_t kernel = wv.dim(0), cout = wv.dim(2);
  const auto padded = static_cast<std::int64_t>(t_in) + 2 * padding;
  if (padded < static_cast<std::int64_t>(kernel)) shape_error("conv1d", xv.shape, wv.shape);
  const std::size_t t_out = static_cast<std::size_t>((padded - static_cast<std::int64_t>(kernel)) / stride + 1);
  const std::size_t kc = kernel * cin, rows = batch * t_out;

  std::vector<T> cols(rows * kc, T(0));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < t_out; ++t) {
      T* row = cols.data() + (b * t_out + t) * kc;
      for (std::size_t kk = 0; kk < kernel; ++kk) {
        const std::int64_t src = static_cast<std::int64_t>(t) * stride - padding + static_cast<std::int64_t>(kk);
        if (src < 0 || src >= static_cast<std::int64_t>(t_in)) continue;
        const T* xs = xv.data.data() + (b * t_in + static_cast<std::size_t>(src)) * cin;
        std::copy(xs, xs + cin, row + kk * cin);
      }
    }
  }
  Tensor<T> out({batch, t_out, cout});
  const auto& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + r * cout);
  gemm<T>(false, false, rows, cout, kc, T(1), cols.data(), kc, wv.data.data(), cout, T(1), out.data.data(), cout);

  const bool needs_cols = w.requires_grad();
  if (!needs_cols) cols = {};
  return x.tape()->record(
      "conv1d", {x, w, bias}, std::move(out),
      [=, cols = std::move(cols)](BackwardContext<T>& c) {
        const T* g = c.out_grad.data.data();
        if (c.parent_grads[1]) {
          gemm<T>(true, false, kc, cout, rows, T(1), cols.data(), kc, g, cout, T(1),
                  c.parent_grads[1]->data.data(), cout);
        }
        if (c.parent_grads[2]) {
          std::vector<double> acc(cout, 0.0);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < cout; ++j) acc[j] += g[r * cout + j];
          auto& gb = c.parent_grads[2]->data;
          for (std::size_t j = 0; j < cout; ++j) gb[j] += static_cast<T>(acc[j]);
        }
        if (c.parent_grads[0]) {
          std::vector<T> dcols(rows * kc, T(0));
          gemm<T>(false, true, rows, kc, cout, T(1), g, cout, c.parent_values[1]->data.data(), cout, T(0),
                  dcols.data(), kc);
          auto& gx = c.parent_grads[0]->data;
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t t = 0; t < t_out; ++t) {
              const T* row = dcols.data() + (b * t_out + t) * kc;
              for (std::size_t kk = 0; kk < kernel; ++kk) {
                const std::int64_t src =
                    static_cast<std::int64_t>(t) * stride - padding + static_cast<std::int64_t>(kk);
                if (src < 0 || src >= static_cast<std::int64_t>(t_in)) continue;
                T* dst = gx.data() + (b * t_in + static_cast<std::size_t>(src)) * cin;
                for (std::size_t ci = 0; ci < cin; ++ci) dst[ci] += row[kk * cin + ci];
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (!trailing_match(av.shape, bv.shape)) shape_error("add", av.shape, bv.shape);
  Tensor<T> out = av;
  const std::size_t inner = bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i % inner];
  return a.tape()->record("add", {a, b}, std::move(out), [inner](BackwardContext<T>& c) {
    const auto& g = c.out_grad.data;
    if (c.parent_grads[0]) {
      auto& ga = c.parent_grads[0]->data;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (c.parent_grads[1]) {
      auto& gb = c.parent_grads[1]->data;
      if (inner == g.size()) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      } else {
        std::vector<double> acc(inner, 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) acc[i % inner] += g[i];
        for (std::size_t i = 0; i < inner; ++i) gb[i] += static_cast<T>(acc[i]);
      }
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (!trailing_match(av.shape, bv.shape)) shape_error("mul", av.shape, bv.shape);
  Tensor<T> out = av;
  const std::size_t inner = bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i % inner];
  return a.tape()->record("mul", {a, b}, std::move(out), [inner](BackwardContext<T>& c) {
    const auto& g = c.out_grad.data;
    const auto& av = c.parent_values[0]->data;
    const auto& bv = c.parent_values[1]->data;
    if (c.parent_grads[0]) {
      auto& ga = c.parent_grads[0]->data;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i % inner];
    }
    if (c.parent_grads[1]) {
      std::vector<double> acc(inner, 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i % inner] += static_cast<double>(g[i]) * av[i];
      auto& gb = c.parent_grads[1]->data;
      for (std::size_t i = 0; i < inner; ++i) gb[i] += static_cast<T>(acc[i]);
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, double factor) {
  Tensor<T> out = a.value();
  const T f = static_cast<T>(factor);
  for (auto& v : out.data) v *= f;
  return a.tape()->record("scale", {a}, std::move(out), [f](BackwardContext<T>& c) {
    auto& ga = c.parent_grads[0]->data;
    const auto& g = c.out_grad.data;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += f * g[i];
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  double acc = 0.0;
  for (T v : a.value().data) acc += v;
  return a.tape()->record("sum", {a}, Tensor<T>({1}, static_cast<T>(acc)), [](BackwardContext<T>& c) {
    const T g = c.out_grad.data[0];
    for (auto& v : c.parent_grads[0]->data) v += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw std::invalid_argument("mean: empty tensor");
  double acc = 0.0;
  for (T v : a.value().data) acc += v;
  return a.tape()->record("mean", {a}, Tensor<T>({1}, static_cast<T>(acc / static_cast<double>(n))),
                          [n](BackwardContext<T>& c) {
                            const T g = static_cast<T>(c.out_grad.data[0] / static_cast<double>(n));
                            for (auto& v : c.parent_grads[0]->data) v += g;
                          });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps) {
  const auto& xv = x.value();
  const std::size_t d = xv.shape.back();
  if (gamma.value().shape != Shape{d} || beta.value().shape != Shape{d}) {
    shape_error("layer_norm", xv.shape, gamma.value().shape);
  }
  const std::size_t rows = xv.size() / d;
  Tensor<T> out(xv.shape);
  std::vector<T> xhat(xv.size());
  std::vector<double> inv_std(rows);
  const auto& gv = gamma.value().data;
  const auto& bv = beta.value().data;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mu) * is;
      xhat[r * d + j] = static_cast<T>(h);
      out.data[r * d + j] = static_cast<T>(h * gv[j] + bv[j]);
    }
  }
  return x.tape()->record(
      "layer_norm", {x, gamma, beta}, std::move(out),
      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](BackwardContext<T>& c) {
        const auto& g = c.out_grad.data;
        const auto& gv = c.parent_values[1]->data;
        if (c.parent_grads[1] || c.parent_grads[2]) {
          std::vector<double> dg(d, 0.0), db(d, 0.0);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) {
              dg[j] += static_cast<double>(g[r * d + j]) * xhat[r * d + j];
              db[j] += g[r * d + j];
            }
          if (c.parent_grads[1])
            for (std::size_t j = 0; j < d; ++j) c.parent_grads[1]->data[j] += static_cast<T>(dg[j]);
          if (c.parent_grads[2])
            for (std::size_t j = 0; j < d; ++j) c.parent_grads[2]->data[j] += static_cast<T>(db[j]);
        }
        if (c.parent_grads[0]) {
          auto& gx = c.parent_grads[0]->data;
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_gh = 0.0, mean_gh_x = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double gh = static_cast<double>(g[r * d + j]) * gv[j];
              mean_gh += gh;
              mean_gh_x += gh * xhat[r * d + j];
            }
            mean_gh /= static_cast<double>(d);
            mean_gh_x /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const double gh = static_cast<double>(g[r * d + j]) * gv[j];
              gx[r * d + j] += static_cast<T>(inv_std[r] * (gh - mean_gh - xhat[r * d + j] * mean_gh_x));
            }
          }
        }
      });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape);
  // Phi(x) is kept for the backward pass.
  std::vector<T> cdf(xv.size());
  const T half_sqrt2 = static_cast<T>(std::numbers::sqrt2 / 2.0);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T v = xv.data[i];
    cdf[i] = T(0.5) * (T(1) + std::erf(v * half_sqrt2));
    out.data[i] = v * cdf[i];
  }
  return x.tape()->record("gelu", {x}, std::move(out), [cdf = std::move(cdf)](BackwardContext<T>& c) {
    const auto& xv = c.parent_values[0]->data;
    const auto& g = c.out_grad.data;
    auto& gx = c.parent_grads[0]->data;
    const T inv_sqrt_2pi = static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const T v = xv[i];
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      gx[i] += g[i] * (cdf[i] + v * pdf);
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data) v = v > T(0) ? v : T(0);
  return x.tape()->record("relu", {x}, std::move(out), [](BackwardContext<T>& c) {
    const auto& xv = c.parent_values[0]->data;
    const auto& g = c.out_grad.data;
    auto& gx = c.parent_grads[0]->data;
    for (std::size_t i = 0; i < xv.size(); ++i)
      if (xv[i] > T(0)) gx[i] += g[i];
  });
}

template <typename T>
Var<T> softmax(const Var<T>& x) {
  const auto& xv = x.value();
  const std::size_t d = xv.shape.back(), rows = xv.size() / d;
  Tensor<T> out(xv.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data.data() + r * d;
    const double mx = *std::max_element(xr, xr + d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += std::exp(xr[j] - mx);
    for (std::size_t j = 0; j < d; ++j) out.data[r * d + j] = static_cast<T>(std::exp(xr[j] - mx) / z);
  }
  return x.tape()->record("softmax", {x}, std::move(out), [rows, d](BackwardContext<T>& c) {
    const auto& y = c.out_value.data;
    const auto& g = c.out_grad.data;
    auto& gx = c.parent_grads[0]->data;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(g[r * d + j]) * y[r * d + j];
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += static_cast<T>(y[r * d + j] * (g[r * d + j] - dot));
    }
  });
}

template <typename T>
Var<T> log_softmax(const Var<T>& x) {
  const auto& xv = x.value();
  const std::size_t d = xv.shape.back(), rows = xv.size() / d;
  Tensor<T> out(xv.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data.data() + r * d;
    const double mx = *std::max_element(xr, xr + d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += std::exp(xr[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < d; ++j) out.data[r * d + j] = static_cast<T>(xr[j] - lse);
  }
  return x.tape()->record("log_softmax", {x}, std::move(out), [rows, d](BackwardContext<T>& c) {
    const auto& y = c.out_value.data;
    const auto& g = c.out_grad.data;
    auto& gx = c.parent_grads[0]->data;
    for (std::size_t r = 0; r < rows; ++r) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < d; ++j) gsum += g[r * d + j];
      for (std::size_t j = 0; j < d; ++j)
        gx[r * d + j] += static_cast<T>(g[r * d + j] - std::exp(static_cast<double>(y[r * d + j])) * gsum);
    }
  });
}

template <typename T>
Var<T> mean_pool_time(const Var<T>& x, std::span<const std::size_t> lengths) {
  const auto& xv = x.value();
  if (xv.rank() != 3) throw std::invalid_argument("mean_pool_time: expected [B, T, D], got " + shape_string(xv.shape));
  const std::size_t batch = xv.dim(0), steps = xv.dim(1), d = xv.dim(2);
  if (!lengths.empty() && lengths.size() != batch) {
    throw std::invalid_argument("mean_pool_time: lengths size does not match batch");
  }
  std::vector<std::size_t> len(batch, steps);
  for (std::size_t b = 0; b < lengths.size(); ++b) len[b] = std::clamp<std::size_t>(lengths[b], 1, steps);
  Tensor<T> out({batch, d});
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double> acc(d, 0.0);
    for (std::size_t t = 0; t < len[b]; ++t) {
      const T* row = xv.data.data() + (b * steps + t) * d;
      for (std::size_t j = 0; j < d; ++j) acc[j] += row[j];
    }
    for (std::size_t j = 0; j < d; ++j) out.data[b * d + j] = static_cast<T>(acc[j] / static_cast<double>(len[b]));
  }
  return x.tape()->record("mean_pool_time", {x}, std::move(out), [=](BackwardContext<T>& c) {
    const auto& g = c.out_grad.data;
    auto& gx = c.parent_grads[0]->data;
    for (std::size_t b = 0; b < batch; ++b) {
      const double inv = 1.0 / static_cast<double>(len[b]);
      for (std::size_t t = 0; t < len[b]; ++t) {
        T* row = gx.data() + (b * steps + t) * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += static_cast<T>(g[b * d + j] * inv);
      }
    }
  });
}

template <typename T>
Var<T> dropout(const Var<T>& x, double rate, bool train, RngStream* rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (!train || rate == 0.0) return x;
  if (!rng) throw std::invalid_argument("dropout: train mode needs an rng");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.value().size());
  for (auto& m : mask) m = rng->uniform() < rate ? T(0) : keep_scale;
  Tensor<T> out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask[i];
  return x.tape()->record("dropout", {x}, std::move(out), [mask = std::move(mask)](BackwardContext<T>& c) {
    const auto& g = c.out_grad.data;
    auto& gx = c.parent_grads[0]->data;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

template <typename T>
Var<T> l2_normalize(const Var<T>& x) {
  const auto& xv = x.value();
  const std::size_t d = xv.shape.back(), rows = xv.size() / d;
  Tensor<T> out(xv.shape);
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += static_cast<double>(xv.data[r * d + j]) * xv.data[r * d + j];
    norms[r] = std::max(std::sqrt(ss), 1e-12);
    for (std::size_t j = 0; j < d; ++j) out.data[r * d + j] = static_cast<T>(xv.data[r * d + j] / norms[r]);
  }
  return x.tape()->record("l2_normalize", {x}, std::move(out),
                          [rows, d, norms = std::move(norms)](BackwardContext<T>& c) {
                            const auto& y = c.out_value.data;
                            const auto& g = c.out_grad.data;
                            auto& gx = c.parent_grads[0]->data;
                            for (std::size_t r = 0; r < rows; ++r) {
                              double dot = 0.0;
                              for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(g[r * d + j]) * y[r * d + j];
                              for (std::size_t j = 0; j < d; ++j)
                                gx[r * d + j] += static_cast<T>((g[r * d + j] - y[r * d + j] * dot) / norms[r]);
                            }
                          });
}

template <typename T>
Var<T> batch_standardize(const Var<T>& x, double eps) {
  const auto& xv = x.value();
  if (xv.rank() != 2) throw std::invalid_argument("batch_standardize: expected [B, D], got " + shape_string(xv.shape));
  const std::size_t batch = xv.dim(0), d = xv.dim(1);
  Tensor<T> out(xv.shape);
  std::vector<double> inv_std(d);
  std::vector<double> yhat(xv.size());
  for (std::size_t j = 0; j < d; ++j) {
    double mu = 0.0;
    for (std::size_t b = 0; b < batch; ++b) mu += xv.data[b * d + j];
    mu /= static_cast<double>(batch);
    double var = 0.0;
    for (std::size_t b = 0; b < batch; ++b) var += (xv.data[b * d + j] - mu) * (xv.data[b * d + j] - mu);
    var /= static_cast<double>(batch);
    inv_std[j] = 1.0 / std::sqrt(var + eps);
    for (std::size_t b = 0; b < batch; ++b) {
      yhat[b * d + j] = (xv.data[b * d + j] - mu) * inv_std[j];
      out.data[b * d + j] = static_cast<T>(yhat[b * d + j]);
    }
  }
  return x.tape()->record(
      "batch_standardize", {x}, std::move(out),
      [batch, d, inv_std = std::move(inv_std), yhat = std::move(yhat)](BackwardContext<T>& c) {
        const auto& g = c.out_grad.data;
        auto& gx = c.parent_grads[0]->data;
        for (std::size_t j = 0; j < d; ++j) {
          double mg = 0.0, mgy = 0.0;
          for (std::size_t b = 0; b < batch; ++b) {
            mg += g[b * d + j];
            mgy += static_cast<double>(g[b * d + j]) * yhat[b * d + j];
          }
          mg /= static_cast<double>(batch);
          mgy /= static_cast<double>(batch);
          for (std::size_t b = 0; b < batch; ++b)
            gx[b * d + j] += static_cast<T>(inv_std[j] * (g[b * d + j] - mg - yhat[b * d + j] * mgy));
        }
      });
}

#define SERLAB_INSTANTIATE(T)                                                                   \
  template struct Tensor<T>;                                                                    \
  template class ParameterStore<T>;                                                             \
  template class Var<T>;                                                                        \
  template class Tape<T>;                                                                       \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                      \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&);                                      \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                       \
  template Var<T> bmm<T>(const Var<T>&, const Var<T>&, bool);                                   \
  template Var<T> conv1d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int);             \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                         \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                         \
  template Var<T> scale<T>(const Var<T>&, double);                                              \
  template Var<T> sum<T>(const Var<T>&);                                                        \
  template Var<T> mean<T>(const Var<T>&);                                                       \
  template Var<T> layer_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, double);           \
  template Var<T> gelu<T>(const Var<T>&);                                                       \
  template Var<T> relu<T>(const Var<T>&);                                                       \
  template Var<T> softmax<T>(const Var<T>&);                                                    \
  template Var<T> log_softmax<T>(const Var<T>&);                                                \
  template Var<T> mean_pool_time<T>(const Var<T>&, std::span<const std::size_t>);               \
  template Var<T> dropout<T>(const Var<T>&, double, bool, RngStream*);                          \
  template Var<T> l2_normalize<T>(const Var<T>&);                                               \
  template Var<T> batch_standardize<T>(const Var<T>&, double);

SERLAB_INSTANTIATE(float)
SERLAB_INSTANTIATE(double)

#undef SERLAB_INSTANTIATE

}  // namespace serlab::tensor
