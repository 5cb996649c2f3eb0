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
#include <string_view>
#include <utility>

namespace serlab {

/// Deterministic random stream (xoshiro256**) that can be split into
/// independent substreams keyed by (purpose, index). A substream depends only
/// on the parent's seed and the key, never on how many draws the parent made.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0);

  RngStream split(std::string_view purpose, std::uint64_t index = 0) const;
  RngStream split(std::string_view purpose, std::uint64_t a,
                  std::uint64_t b) const;

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);
  /// Uniform integer in the closed range [lo, hi].
  std::int64_t uniform_int_closed(std::int64_t lo, std::int64_t hi);
  double normal();
  bool bernoulli(double p);

  template <class It>
  void shuffle(It first, It last) {
    auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      auto j = uniform_int(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t fnv1a64(std::string_view text);
std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace serlab
