/* Copyright 2026 The ct2ctpa Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <doctest.h>

#include "ct2ctpa/autograd.hpp"
#include "unit/gradcheck.hpp"

using namespace ct2ctpa;
using ct2ctpa::testing::gradcheck;
using ct2ctpa::testing::random_tensor;

namespace {

// sum(w * y) for a fixed random w, written with the available ops as
// 0.5 * (|y + w|^2 - |y|^2) + const.
ag::Var weighted_sum(const ag::Var& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  Tensor w = random_tensor(y->shape(), rng);
  const float n = static_cast<float>(y->value.numel());
  ag::Var a = ag::scale(ag::mse_to_constant(ag::add(y, ag::constant(w)), 0.0f), 0.5f * n);
  ag::Var b = ag::scale(ag::mse_to_constant(y, 0.0f), -0.5f * n);
  return ag::sum_scalars({a, b});
}

}  // namespace

TEST_CASE("gradients of layer ops match central differences") {
  Rng rng(5);
  const Tensor x = random_tensor({1, 2, 6, 6}, rng);
  const Tensor w = random_tensor({3, 2, 3, 3}, rng, 0.5);
  const Tensor bt = random_tensor({1, 3, 1, 1}, rng);

  SUBCASE("conv2d input") {
    gradcheck([&](const ag::Var& v) {
      return weighted_sum(ag::conv2d(v, ag::constant(w), ag::constant(bt), 2, 1));
    }, x);
  }
  SUBCASE("conv2d weight") {
    gradcheck([&](const ag::Var& v) {
      return weighted_sum(ag::conv2d(ag::constant(x), v, ag::constant(bt), 1, 1));
    }, w);
  }
  SUBCASE("conv_transpose2d input and weight") {
    const Tensor wt = random_tensor({2, 3, 3, 3}, rng, 0.5);
    gradcheck([&](const ag::Var& v) {
      return weighted_sum(ag::conv_transpose2d(v, ag::constant(wt), ag::constant(bt), 2, 1, 1));
    }, x);
    gradcheck([&](const ag::Var& v) {
      return weighted_sum(ag::conv_transpose2d(ag::constant(x), v, nullptr, 2, 1, 1));
    }, wt);
  }
  SUBCASE("instance norm") {
    gradcheck([&](const ag::Var& v) { return weighted_sum(ag::instance_norm(v)); }, x, 1e-2, 3e-2);
  }
  SUBCASE("reflect pad") {
    gradcheck([&](const ag::Var& v) { return weighted_sum(ag::reflect_pad(v, 2)); }, x);
  }
  SUBCASE("activations") {
    gradcheck([&](const ag::Var& v) { return weighted_sum(ag::tanh(v)); }, x);
    gradcheck([&](const ag::Var& v) { return weighted_sum(ag::sigmoid(v)); }, x);
    gradcheck([&](const ag::Var& v) { return weighted_sum(ag::leaky_relu(v, 0.2f)); }, x, 1e-3);
  }
  SUBCASE("concat and pooling") {
    const Tensor other = random_tensor({1, 1, 6, 6}, rng);
    gradcheck([&](const ag::Var& v) {
      return weighted_sum(ag::global_avg_pool(ag::concat_channels(v, ag::constant(other))));
    }, x);
    gradcheck([&](const ag::Var& v) { return weighted_sum(ag::global_max_pool(v)); }, x, 1e-3);
    gradcheck([&](const ag::Var& v) { return weighted_sum(ag::lse_pool(v, 3.0f)); }, x, 1e-3);
    gradcheck([&](const ag::Var& v) { return weighted_sum(ag::log_histogram(v, 5, -3.0f, 3.0f, 0.05)); }, x, 1e-3);
  }
}

TEST_CASE("loss gradients match central differences") {
  Rng rng(6);
  const Tensor x = random_tensor({1, 1, 4, 4}, rng);
  gradcheck([](const ag::Var& v) { return ag::bce_with_logits(v, 1.0f); }, x);
  gradcheck([](const ag::Var& v) { return ag::bce_with_logits(v, 0.0f); }, x);
  gradcheck([](const ag::Var& v) { return ag::mse_to_constant(v, 1.0f); }, x);
  const Tensor target = random_tensor({1, 1, 4, 4}, rng);
  gradcheck([&](const ag::Var& v) { return ag::l1_loss(v, ag::constant(target)); }, x, 1e-3);
  const Tensor logits = random_tensor({3, 2, 1, 1}, rng);
  gradcheck([](const ag::Var& v) { return ag::softmax_cross_entropy(v, {0, 1, 1}); }, logits);
}

TEST_CASE("adversarial loss reference values") {
  ag::Var zeros = ag::constant(Tensor(Shape{1, 1, 3, 3}, 0.0f));
  CHECK(ag::item(ag::bce_with_logits(zeros, 1.0f)) == doctest::Approx(std::log(2.0)));
  CHECK(ag::item(ag::bce_with_logits(zeros, 0.0f)) == doctest::Approx(std::log(2.0)));
  ag::Var ones = ag::constant(Tensor(Shape{1, 1, 3, 3}, 1.0f));
  CHECK(ag::item(ag::mse_to_constant(ones, 1.0f)) == 0.0f);
  CHECK_THROWS_AS(ag::bce_with_logits(ag::constant(Tensor(Shape{1, 1, 1, 1}, NAN)), 1.0f),
                  NumericError);
}

TEST_CASE("shared subexpressions accumulate gradients once per use") {
  ag::Var x = ag::parameter(Tensor(Shape{1, 1, 1, 1}, 3.0f));
  ag::Var y = ag::add(x, x);  // 2x
  ag::Var z = ag::add(y, y);  // 4x
  ag::backward(ag::mean(z));
  CHECK(x->grad.data()[0] == doctest::Approx(4.0));
}

TEST_CASE("no-grad scope records no history") {
  ag::Var x = ag::parameter(Tensor(Shape{1, 1, 2, 2}, 1.0f));
  ag::NoGradGuard guard;
  ag::Var y = ag::tanh(x);
  CHECK_FALSE(y->requires_grad);
  CHECK(y->inputs.empty());
}
