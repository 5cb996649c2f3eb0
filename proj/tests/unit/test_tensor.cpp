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

#include "serlab/rng.hpp"
#include "serlab/tensor.hpp"
#include "testkit.hpp"

using namespace serlab;
using namespace serlab::tensor;

TEST_SUITE("tensor") {

TEST_CASE("softmax, l2_normalize and pooling examples") {
  Tape<double> tape(false);
  auto s = softmax(tape.constant(Tensor<double>({1, 4}, 0.7)));
  for (double v : s.value().data) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  auto n = l2_normalize(tape.constant(Tensor<double>({1, 2}, {3.0, 4.0})));
  CHECK(n.value().data[0] == doctest::Approx(0.6));
  CHECK(n.value().data[1] == doctest::Approx(0.8));
  Tensor<double> frames({1, 5, 3});
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t d = 0; d < 3; ++d) frames.data[t * 3 + d] = 0.5 * d - 1.0;
  auto p = mean_pool_time(tape.constant(frames));
  CHECK(p.value().data == std::vector<double>{-1.0, -0.5, 0.0});
}

TEST_CASE("backward of sum of squares") {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>({2}, {1.0, 2.0}));
  auto loss = sum(mul(x, x));
  tape.backward(loss);
  CHECK(x.grad().data == std::vector<double>{2.0, 4.0});
}

TEST_CASE("detached parameter receives a zero gradient") {
  ParameterStore<double> store;
  store.add("p", Tensor<double>({3}, 1.0));
  store.add("q", Tensor<double>({3}, 2.0));
  Tape<double> tape;
  auto loss = sum(tape.parameter(store, "q"));
  tape.parameter(store, "p");
  tape.backward(loss);
  auto g = tape.gradients(store);
  CHECK(g.at("p").data == std::vector<double>(3, 0.0));
  CHECK(g.at("q").data == std::vector<double>(3, 1.0));
}

TEST_CASE("frozen parameters are omitted from the gradient map") {
  ParameterStore<double> store;
  store.add("w", Tensor<double>({2}, 1.0), true);
  Tape<double> tape;
  auto loss = sum(tape.parameter(store, "w"));
  tape.backward(loss);
  CHECK(tape.gradients(store).empty());
}

TEST_CASE("non-scalar loss is rejected") {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>({2}, 1.0));
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("shape mismatches name both shapes") {
  Tape<float> tape;
  auto a = tape.constant(Tensor<float>({2, 3}));
  auto b = tape.constant(Tensor<float>({4, 5}));
  try {
    matmul(a, b);
    FAIL("expected a shape error");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[4, 5]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
}

TEST_CASE("dropout is identity in eval mode and scales kept units in train mode") {
  Tape<float> tape(false);
  auto x = tape.constant(Tensor<float>({4, 8}, 1.0f));
  CHECK(dropout(x, 0.5, false, nullptr).value() == x.value());
  RngStream rng(3);
  auto y = dropout(x, 0.25, true, &rng);
  for (float v : y.value().data) CHECK((v == 0.0f || std::abs(v - 1.0f / 0.75f) < 1e-6f));
}

TEST_CASE("batch_standardize of identical rows is zero") {
  Tape<double> tape(false);
  auto y = batch_standardize(tape.constant(Tensor<double>({4, 3}, 0.3)));
  for (double v : y.value().data) CHECK(v == 0.0);
}

TEST_CASE("every primitive passes a finite-difference check") {
  RngStream rng(2024);
  for (int trial = 0; trial < 3; ++trial) {
    for (const auto& c : testkit::primitive_cases(rng)) {
      auto r = testkit::gradcheck(c);
      INFO(c.name);
      CHECK(r.max_rel_error <= 1e-4);
      CHECK(r.checked > 0);
    }
  }
}

TEST_CASE("float and double paths agree") {
  RngStream rng(5);
  auto a = testkit::random_tensor({3, 4}, rng), b = testkit::random_tensor({4, 2}, rng);
  Tape<double> td(false);
  Tape<float> tf(false);
  auto yd = gelu(matmul(td.constant(a), td.constant(b)));
  auto yf = gelu(matmul(tf.constant(a.cast<float>()), tf.constant(b.cast<float>())));
  for (std::size_t i = 0; i < yd.value().size(); ++i)
    CHECK(yf.value().data[i] == doctest::Approx(yd.value().data[i]).epsilon(1e-5));
}

TEST_CASE("parameter store subset and optimizer reset") {
  ParameterStore<float> s;
  s.add("encoder.a", Tensor<float>({2}, 1.0f));
  s.add("head.b", Tensor<float>({2}, 2.0f));
  s.add("encoder.c", Tensor<float>({1}, 3.0f), true);
  auto sub = s.subset({"encoder."});
  CHECK(sub.names() == std::vector<std::string>{"encoder.a", "encoder.c"});
  CHECK(sub.entry("encoder.c").frozen);
  CHECK(s.parameter_count() == 5);
  CHECK_THROWS(s.add("head.b", Tensor<float>({1})));
}

}  // TEST_SUITE
