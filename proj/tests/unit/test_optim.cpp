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

#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "serlab/optim.hpp"

using namespace serlab;
using namespace serlab::optim;
using tensor::Tensor;

namespace {

ParameterStore<double> scalar_store(double value, bool frozen = false) {
  ParameterStore<double> s;
  s.add("p", Tensor<double>({1}, value), frozen);
  return s;
}

}  // namespace

TEST_SUITE("optim") {

TEST_CASE("zero gradient and zero decay leave parameters unchanged") {
  ParameterStore<double> s;
  s.add("a", Tensor<double>({3}, {0.5, -1.0, 2.0}));
  auto before = s.value("a");
  AdamWConfig cfg{0.1, 0.9, 0.999, 1e-8, 0.0};
  adamw_step(s, {{"a", Tensor<double>({3}, 0.0)}}, cfg);
  CHECK(s.value("a") == before);
}

TEST_CASE("single step closed form") {
  auto s = scalar_store(1.0);
  adamw_step(s, {{"p", Tensor<double>({1}, 1.0)}}, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
  CHECK(s.value("p").item() == doctest::Approx(0.9).epsilon(1e-9));
}

TEST_CASE("decoupled weight decay") {
  auto s = scalar_store(2.0);
  adamw_step(s, {{"p", Tensor<double>({1}, 0.0)}}, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.5});
  CHECK(s.value("p").item() == doctest::Approx(2.0 * (1.0 - 0.05)).epsilon(1e-12));
}

TEST_CASE("frozen entries are unchanged and missing gradients rejected") {
  auto s = scalar_store(1.0, true);
  adamw_step(s, {{"p", Tensor<double>({1}, 5.0)}}, AdamWConfig{});
  CHECK(s.value("p").item() == 1.0);
  auto t = scalar_store(1.0);
  CHECK_THROWS_AS(adamw_step(t, {}, AdamWConfig{}), std::invalid_argument);
  CHECK_THROWS(adamw_step(t, {{"p", Tensor<double>({2}, 0.0)}}, AdamWConfig{}));
}

TEST_CASE("EMA identities and two-step recurrence") {
  auto target = scalar_store(0.3), online = scalar_store(0.7);
  ema_update(target, online, 1.0);
  CHECK(target.value("p").item() == 0.3);
  ema_update(target, online, 0.0);
  CHECK(target.value("p").item() == 0.7);
  OnlineTargetPair<double> pair{scalar_store(1.0), scalar_store(0.0), 0.99};
  ema_update(pair);
  ema_update(pair);
  CHECK(std::abs(pair.target.value("p").item() - 0.0199) <= 1e-12);
  auto same = scalar_store(0.25);
  ema_update(same, scalar_store(0.25), 0.9);
  CHECK(same.value("p").item() == 0.25);
  CHECK_THROWS(ema_update(same, scalar_store(0.1), 1.5));
  ParameterStore<double> other;
  other.add("q", Tensor<double>({1}, 0.0));
  CHECK_THROWS(ema_update(same, other, 0.5));
}

TEST_CASE("cosine momentum ramps from base to one") {
  CHECK(cosine_momentum(0.99, 0, 101) == doctest::Approx(0.99));
  CHECK(cosine_momentum(0.99, 100, 101) == doctest::Approx(1.0));
  CHECK(cosine_momentum(0.99, 50, 101) == doctest::Approx(0.995));
}

TEST_CASE("parameter file round trip and header layout") {
  ParameterStore<float> s;
  s.add("encoder.w", Tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6}));
  s.add("b", Tensor<float>({1}, {-0.5f}));
  auto bytes = encode_parameters(s);
  REQUIRE(bytes.size() > 12);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SERK");
  CHECK(bytes[4] == kParameterFormatVersion);
  CHECK(bytes[8] == 2);
  auto back = decode_parameters(bytes);
  CHECK(back.names() == s.names());
  CHECK(back.value("encoder.w") == s.value("encoder.w"));
  auto path = testing::scratch_dir("optim") / "p.serk";
  write_parameters(path, s);
  CHECK(read_parameters(path).value("b") == s.value("b"));
  bytes[0] = 'X';
  CHECK_THROWS(decode_parameters(bytes));
  bytes[0] = 'S';
  bytes.pop_back();
  CHECK_THROWS(decode_parameters(bytes));
}

TEST_CASE("optimizer state round trip") {
  ParameterStore<float> s;
  s.add("w", Tensor<float>({2}, {1.0f, 2.0f}));
  adamw_step(s, {{"w", Tensor<float>({2}, {0.3f, -0.1f})}}, AdamWConfig{});
  auto state = optimizer_state(s);
  ParameterStore<float> fresh;
  fresh.add("w", s.value("w"));
  restore_optimizer_state(fresh, state);
  CHECK(fresh.entry("w").m == s.entry("w").m);
  CHECK(fresh.entry("w").v == s.entry("w").v);
  CHECK(fresh.entry("w").step == 1);
}

}  // TEST_SUITE
