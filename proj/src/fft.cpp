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

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "serlab/dsp.hpp"

namespace serlab::dsp {

namespace {

using cd = std::complex<double>;

// std::complex operator* guards against inf/nan and is slow without
// -ffast-math; the FFT inputs are always finite.
inline cd cmul(cd a, cd b) {
  return {a.real() * b.real() - a.imag() * b.imag(),
          a.real() * b.imag() + a.imag() * b.real()};
}

}  // namespace

FftPlan::FftPlan(std::size_t n) : n_(n) {
  if (n == 0) throw std::invalid_argument("FftPlan: size must be positive");
  std::size_t rest = n;
  while (rest % 4 == 0) {
    factors_.push_back(4);
    rest /= 4;
  }
  for (std::size_t p : {2, 3, 5}) {
    while (rest % p == 0) {
      factors_.push_back(p);
      rest /= p;
    }
  }
  for (std::size_t p = 7; rest > 1; p += 2) {
    while (rest % p == 0) {
      factors_.push_back(p);
      rest /= p;
    }
  }
  twiddles_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double angle = -2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    twiddles_[i] = {std::cos(angle), std::sin(angle)};
  }
  std::size_t max_p = 1;
  for (auto p : factors_) max_p = std::max(max_p, p);
  scratch_.resize(2 * max_p);
}

void FftPlan::forward(std::span<const cd> in, std::span<cd> out) const {
  if (in.size() != n_ || out.size() != n_) {
    throw std::invalid_argument("FftPlan::forward: size mismatch");
  }
  recurse(in.data(), out.data(), n_, 1, 0);
}

void FftPlan::recurse(const cd* in, cd* out, std::size_t n, std::size_t stride,
                      std::size_t level) const {
  if (n == 1) {
    out[0] = in[0];
    return;
  }
  const std::size_t p = factors_[level];
  const std::size_t m = n / p;
  for (std::size_t j = 0; j < p; ++j) {
    recurse(in + j * stride, out + j * m, m, stride * p, level + 1);
  }
  const std::size_t tw_step = n_ / n;  // W_n^x = W_N^(x * N/n)
  cd* t = scratch_.data();
  for (std::size_t k = 0; k < m; ++k) {
    t[0] = out[k];
    for (std::size_t j = 1; j < p; ++j) {
      t[j] = cmul(out[j * m + k], twiddles_[(j * k * tw_step) % n_]);
    }
    switch (p) {
      case 2:
        out[k] = t[0] + t[1];
        out[k + m] = t[0] - t[1];
        break;
      case 4: {
        const cd a = t[0] + t[2], b = t[0] - t[2];
        const cd c = t[1] + t[3], d = t[1] - t[3];
        const cd d_rot{d.imag(), -d.real()};  // -i * d
        out[k] = a + c;
        out[k + m] = b + d_rot;
        out[k + 2 * m] = a - c;
        out[k + 3 * m] = b - d_rot;
        break;
      }
      default: {
        cd* y = t + p;
        const std::size_t step = n_ / p;
        for (std::size_t r = 0; r < p; ++r) {
          cd acc = t[0];
          for (std::size_t j = 1; j < p; ++j) {
            acc += cmul(t[j], twiddles_[((j * r) % p) * step]);
          }
          y[r] = acc;
        }
        for (std::size_t r = 0; r < p; ++r) out[k + r * m] = y[r];
      }
    }
  }
}

std::vector<cd> dft_reference(std::span<const cd> in) {
  const std::size_t n = in.size();
  std::vector<cd> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cd acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double angle = -2.0 * std::numbers::pi * static_cast<double>((j * k) % n) / static_cast<double>(n);
      acc += in[j] * cd(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace serlab::dsp
