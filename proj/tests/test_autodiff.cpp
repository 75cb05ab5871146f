// Copyright 2026 The cfsearch Authors.
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "cfsearch/error.hpp"
#include "cfsearch/network.hpp"
#include "cfsearch/ops.hpp"
#include "cfsearch/trainer.hpp"
#include "gradient_check.hpp"
#include "test_support.hpp"

using namespace cfsearch;

using testing::max_relative_error;
using testing::random_tensor;

TEST_CASE("tensor basics") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
  CHECK_THROWS_AS(t.item(), ShapeError);
  CHECK(Tensor::scalar(2.0).item() == 2.0);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK(shape_string({2, 3}) == "[2,3]");
}

TEST_CASE("shape errors name the operation") {
  const Var a = Var::constant(Tensor({2, 3}));
  const Var b = Var::constant(Tensor({3, 2}));
  try {
    ops::add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("add") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::conv2d(Var::constant(Tensor({1, 3, 4, 4})),
                              Var::constant(Tensor({4, 2, 3, 3})), Var(), 2),
                  ShapeError);
}

TEST_CASE("operator gradients match central differences") {
  std::mt19937_64 rng(7);
  auto param = [&](Shape s, double scale = 1.0) {
    return Var::parameter(random_tensor(rng, std::move(s), scale));
  };
  const Var x = param({2, 4, 3, 4});
  const Var y = param({2, 4, 3, 4});
  const Var w = param({4, 4, 3, 3}, 0.3);
  const Var wg = param({4, 2, 3, 3}, 0.3);
  const Var b = param({4});
  const Var g = param({4});
  const Var v = param({2, 4});
  const Var lw = param({3, 4});
  const Var lb = param({3});
  const Var r1 = param({2, 2, 1, 4});
  const Var sq = param({1, 2, 4, 4});

  struct Case {
    std::string name;
    std::function<Var()> f;
    std::vector<Var> inputs;
  };
  const std::vector<Case> cases = {
      {"add", [&] { return ops::sum(ops::mul(ops::add(x, y), y)); }, {x, y}},
      {"sub", [&] { return ops::sum(ops::mul(ops::sub(x, y), x)); }, {x, y}},
      {"scale", [&] { return ops::mean_square(ops::scale(x, -1.7)); }, {x}},
      {"average", [&] { return ops::mean_square(ops::average({x, y, x})); }, {x, y}},
      {"leaky_relu", [&] { return ops::sum(ops::mul(ops::leaky_relu(x, 0.2), y)); }, {x, y}},
      {"tanh", [&] { return ops::sum(ops::tanh(x)); }, {x}},
      {"softplus", [&] { return ops::mean(ops::softplus(x)); }, {x}},
      {"conv2d", [&] { return ops::mean_square(ops::conv2d(x, w, b)); }, {x, w, b}},
      {"conv2d groups", [&] { return ops::mean_square(ops::conv2d(x, wg, b, 2)); }, {x, wg, b}},
      {"channel_mul", [&] { return ops::mean_square(ops::channel_mul(x, g)); }, {x, g}},
      {"add_channel", [&] { return ops::mean_square(ops::add_channel(x, v)); }, {x, v}},
      {"spatial_mean", [&] { return ops::mean_square(ops::spatial_mean(x)); }, {x}},
      {"linear",
       [&] { return ops::mean_square(ops::linear(ops::spatial_mean(x), lw, lb)); },
       {x, lw, lb}},
      {"upsample2", [&] { return ops::mean_square(ops::upsample2(x, 2)); }, {x}},
      {"downsample2", [&] { return ops::mean_square(ops::downsample2(sq, 2)); }, {sq}},
      {"rank-1 resample",
       [&] { return ops::mean_square(ops::resample(ops::resample(r1, 0, 1, 1), 1, -1, 1)); },
       {r1}},
      {"reshape", [&] { return ops::mean_square(ops::reshape(x, {2, 48})); }, {x}},
      {"mean_abs", [&] { return ops::mean_abs(ops::sub(x, y)); }, {x, y}},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    CHECK(max_relative_error(c.f, c.inputs, 1e-5, 1e-2) < 1e-6);
  }
}

TEST_CASE("detach and no-grad stop gradients") {
  const Var x = Var::parameter(Tensor({3}, 2.0));
  backward(ops::sum(ops::mul(ops::detach(x), x)));
  CHECK(x.grad()[0] == 2.0);
  Var y;
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    y = ops::sum(ops::mul(x, x));
  }
  CHECK(grad_enabled());
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("gradients accumulate until zeroed") {
  Var x = Var::parameter(Tensor({2}, 1.0));
  backward(ops::sum(ops::scale(x, 3.0)));
  backward(ops::sum(ops::scale(x, 3.0)));
  CHECK(x.grad()[1] == 6.0);
  x.zero_grad();
  backward(ops::sum(x));
  CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("supernet gradients match central differences on 20 random networks") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const double err = testing::random_network_gradient_error(seed);
    CAPTURE(seed);
    CHECK(err < 1e-4);
    worst = std::max(worst, err);
  }
  MESSAGE("worst relative error " << worst);
}
