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

#include "serlab/optim.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <stdexcept>

namespace serlab::optim {

void AdamWConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("adamw: lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw std::invalid_argument("adamw: betas must be in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("adamw: eps must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("adamw: weight_decay must be >= 0");
}

template <typename T>
void adamw_step(ParameterStore<T>& store, const GradientMap<T>& grads, const AdamWConfig& config) {
  config.validate();
  for (auto& e : store.entries()) {
    if (e.frozen) continue;
    auto it = grads.find(e.name);
    if (it == grads.end()) throw std::invalid_argument("adamw: missing gradient for " + e.name);
    const auto& g = it->second;
    if (g.shape != e.value.shape) {
      throw std::invalid_argument("adamw: gradient shape " + tensor::shape_string(g.shape) + " for " +
                                  e.name + " does not match " + tensor::shape_string(e.value.shape));
    }
    if (e.m.shape != e.value.shape) e.m = Tensor<T>(e.value.shape);
    if (e.v.shape != e.value.shape) e.v = Tensor<T>(e.value.shape);
    ++e.step;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(e.step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(e.step));
    const double decay = 1.0 - config.lr * config.weight_decay;
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double gi = g.data[i];
      const double m = config.beta1 * e.m.data[i] + (1.0 - config.beta1) * gi;
      const double v = config.beta2 * e.v.data[i] + (1.0 - config.beta2) * gi * gi;
      e.m.data[i] = static_cast<T>(m);
      e.v.data[i] = static_cast<T>(v);
      double p = e.value.data[i] * decay;
      p -= config.lr * (m / bc1) / (std::sqrt(v / bc2) + config.eps);
      e.value.data[i] = static_cast<T>(p);
    }
  }
}

template <typename T>
void ema_update(ParameterStore<T>& target, const ParameterStore<T>& online, double momentum) {
  if (momentum < 0.0 || momentum > 1.0) throw std::invalid_argument("ema_update: momentum must be in [0, 1]");
  if (target.size() != online.size()) throw std::invalid_argument("ema_update: stores differ in entry count");
  for (const auto& e : target.entries()) {
    if (!online.contains(e.name)) throw std::invalid_argument("ema_update: online store lacks " + e.name);
    if (online.value(e.name).shape != e.value.shape) {
      throw std::invalid_argument("ema_update: shape mismatch for " + e.name);
    }
  }
  if (momentum == 1.0) return;
  for (auto& e : target.entries()) {
    const auto& src = online.value(e.name).data;
    if (momentum == 0.0) {
      e.value.data = src;
      continue;
    }
    const double w = 1.0 - momentum;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double xi = e.value.data[i];
      e.value.data[i] = static_cast<T>(xi + w * (src[i] - xi));
    }
  }
}

double cosine_momentum(double base, std::int64_t step, std::int64_t total_steps) {
  if (total_steps <= 1) return base;
  const double u = static_cast<double>(step) / static_cast<double>(total_steps - 1);
  return 1.0 - (1.0 - base) * 0.5 * (std::cos(std::numbers::pi * u) + 1.0);
}

template void adamw_step<float>(ParameterStore<float>&, const GradientMap<float>&, const AdamWConfig&);
template void adamw_step<double>(ParameterStore<double>&, const GradientMap<double>&, const AdamWConfig&);
template void ema_update<float>(ParameterStore<float>&, const ParameterStore<float>&, double);
template void ema_update<double>(ParameterStore<double>&, const ParameterStore<double>&, double);

namespace {

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
  template <typename U>
  U get() {
    if (pos_ + sizeof(U) > b_.size()) throw std::runtime_error("parameter file truncated");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  std::string bytes(std::size_t n) {
    if (pos_ + n > b_.size()) throw std::runtime_error("parameter file truncated");
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_parameters(const ParameterStore<float>& store) {
  std::vector<std::uint8_t> out{'S', 'E', 'R', 'K'};
  put<std::uint32_t>(out, kParameterFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& e : store.entries()) {
    if (e.name.size() > 0xffff) throw std::invalid_argument("parameter name too long: " + e.name);
    if (e.value.rank() > 0xff) throw std::invalid_argument("parameter rank too large: " + e.name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(static_cast<std::uint8_t>(e.value.rank()));
    for (auto d : e.value.shape) put<std::uint64_t>(out, d);
    for (float f : e.value.data) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put<std::uint32_t>(out, bits);
    }
  }
  return out;
}

ParameterStore<float> decode_parameters(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.bytes(4) != "SERK") throw std::runtime_error("not a parameter file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kParameterFormatVersion) {
    throw std::runtime_error("unsupported parameter format version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  ParameterStore<float> store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    std::string name = r.bytes(len);
    const auto rank = r.get<std::uint8_t>();
    tensor::Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>();
    Tensor<float> t(shape);
    for (auto& f : t.data) {
      const auto bits = r.get<std::uint32_t>();
      std::memcpy(&f, &bits, 4);
    }
    store.add(std::move(name), std::move(t));
  }
  if (!r.done()) throw std::runtime_error("parameter file has trailing bytes");
  return store;
}

void write_parameters(const std::filesystem::path& path, const ParameterStore<float>& store) {
  const auto bytes = encode_parameters(store);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

ParameterStore<float> read_parameters(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_parameters(bytes);
}

ParameterStore<float> optimizer_state(const ParameterStore<float>& store) {
  ParameterStore<float> out;
  for (const auto& e : store.entries()) {
    if (e.step == 0) continue;
    out.add(e.name + "/m", e.m);
    out.add(e.name + "/v", e.v);
    // steps are small integers; f32 is exact below 2^24
    out.add(e.name + "/step", Tensor<float>({1}, static_cast<float>(e.step)));
  }
  return out;
}

void restore_optimizer_state(ParameterStore<float>& store, const ParameterStore<float>& state) {
  store.reset_optimizer_state();
  for (auto& e : store.entries()) {
    if (!state.contains(e.name + "/step")) continue;
    e.m = state.value(e.name + "/m");
    e.v = state.value(e.name + "/v");
    e.step = static_cast<std::int64_t>(state.value(e.name + "/step").item());
    if (e.m.shape != e.value.shape || e.v.shape != e.value.shape) {
      throw std::runtime_error("optimizer state shape mismatch for " + e.name);
    }
  }
}

}  // namespace serlab::optim
