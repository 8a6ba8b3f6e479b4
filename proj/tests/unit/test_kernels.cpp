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

#include <cmath>

#include "ct2ctpa/kernels.hpp"
#include "ct2ctpa/rng.hpp"

using namespace ct2ctpa;

namespace {

Tensor random_tensor(Shape s, Rng& rng) {
  Tensor t(s);
  for (float& v : t.span()) v = static_cast<float>(rng.normal());
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::fabs(static_cast<double>(a.data()[i]) - b.data()[i]));
  }
  return m;
}

struct ConvCase {
  int n, c, h, w, oc, k, stride, pad;
};

}  // namespace

TEST_CASE("im2col convolution matches the direct serial loop") {
  Rng rng(11);
  const ConvCase cases[] = {
      {1, 1, 9, 9, 4, 3, 1, 1}, {2, 3, 16, 12, 5, 4, 2, 1},
      {1, 4, 7, 7, 2, 7, 1, 3}, {1, 6, 8, 8, 3, 1, 1, 0},
      {1, 2, 11, 11, 3, 4, 1, 1},
  };
  for (const auto& cc : cases) {
    CAPTURE(cc.k);
    CAPTURE(cc.stride);
    const Tensor x = random_tensor({cc.n, cc.c, cc.h, cc.w}, rng);
    const Tensor w = random_tensor({cc.oc, cc.c, cc.k, cc.k}, rng);
    const Tensor b = random_tensor({1, cc.oc, 1, 1}, rng);
    const Tensor fast = kernels::conv2d_forward(x, w, b.span(), cc.stride, cc.pad);
    const Tensor ref = kernels::reference::conv2d_forward(x, w, b.span(), cc.stride, cc.pad);
    CHECK(max_abs_diff(fast, ref) < 1e-4);

    const Tensor dy = random_tensor(fast.shape(), rng);
    Tensor dx_fast(x.shape()), dw_fast(w.shape()), dx_ref(x.shape()), dw_ref(w.shape());
    std::vector<float> db_fast(cc.oc), db_ref(cc.oc);
    kernels::conv2d_backward(x, w, dy, cc.stride, cc.pad, &dx_fast, dw_fast, db_fast);
    kernels::reference::conv2d_backward(x, w, dy, cc.stride, cc.pad, &dx_ref, dw_ref, db_ref);
    CHECK(max_abs_diff(dx_fast, dx_ref) < 1e-3);
    CHECK(max_abs_diff(dw_fast, dw_ref) < 1e-3);
    for (int i = 0; i < cc.oc; ++i) CHECK(db_fast[i] == doctest::Approx(db_ref[i]).epsilon(1e-4));
  }
}

TEST_CASE("transposed convolution matches the scatter reference") {
  Rng rng(12);
  const Tensor x = random_tensor({2, 3, 5, 6}, rng);
  const Tensor w = random_tensor({3, 4, 3, 3}, rng);
  const Tensor b = random_tensor({1, 4, 1, 1}, rng);
  const Tensor fast = kernels::conv_transpose2d_forward(x, w, b.span(), 2, 1, 1);
  const Tensor ref = kernels::reference::conv_transpose2d_forward(x, w, b.span(), 2, 1, 1);
  CHECK(fast.shape() == Shape{2, 4, 10, 12});
  CHECK(max_abs_diff(fast, ref) < 1e-4);

  const Tensor w4 = random_tensor({3, 2, 4, 4}, rng);
  const Tensor fast4 = kernels::conv_transpose2d_forward(x, w4, {}, 2, 1, 0);
  const Tensor ref4 = kernels::reference::conv_transpose2d_forward(x, w4, {}, 2, 1, 0);
  CHECK(fast4.shape() == Shape{2, 2, 10, 12});
  CHECK(max_abs_diff(fast4, ref4) < 1e-4);
}

TEST_CASE("transposed convolution is the adjoint of convolution") {
  // <conv(x), y> == <x, conv_t(y)> for matching geometry.
  Rng rng(13);
  const Tensor x = random_tensor({1, 3, 8, 8}, rng);
  const Tensor w = random_tensor({5, 3, 4, 4}, rng);
  const Tensor cx = kernels::conv2d_forward(x, w, {}, 2, 1);
  const Tensor y = random_tensor(cx.shape(), rng);
  // conv weight [out=5,in=3] doubles as transposed weight [in=5,out=3].
  const Tensor ty = kernels::conv_transpose2d_forward(y, w, {}, 2, 1, 0);
  REQUIRE(ty.shape() == x.shape());
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < cx.numel(); ++i) lhs += double(cx.data()[i]) * y.data()[i];
  for (std::size_t i = 0; i < x.numel(); ++i) rhs += double(x.data()[i]) * ty.data()[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-4));
}

TEST_CASE("instance norm matches the serial reference and has unit statistics") {
  Rng rng(14);
  Tensor x = random_tensor({2, 3, 6, 5}, rng);
  for (float& v : x.span()) v = 3.0f * v + 1.5f;
  std::vector<float> mean, inv;
  const Tensor y = kernels::instance_norm_forward(x, 1e-5f, mean, inv);
  CHECK(max_abs_diff(y, kernels::reference::instance_norm_forward(x, 1e-5f)) < 1e-5);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c) {
      double s = 0.0, sq = 0.0;
      const float* p = y.plane(n, c);
      for (int i = 0; i < 30; ++i) {
        s += p[i];
        sq += double(p[i]) * p[i];
      }
      CHECK(std::fabs(s / 30) < 1e-5);
      CHECK(sq / 30 == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("reflection padding mirrors without repeating the edge") {
  Tensor x(Shape{1, 1, 3, 3});
  for (int i = 0; i < 9; ++i) x.data()[i] = static_cast<float>(i);
  const Tensor y = kernels::reflect_pad(x, 1);
  REQUIRE(y.shape() == Shape{1, 1, 5, 5});
  CHECK(y.at(0, 0, 0, 0) == 4.0f);  // mirrors (1,1)
  CHECK(y.at(0, 0, 1, 0) == 1.0f);
  CHECK(y.at(0, 0, 4, 4) == 4.0f);
  CHECK_THROWS_AS(kernels::reflect_pad(x, 3), ShapeError);

  // backward is the adjoint
  Rng rng(3);
  const Tensor d = random_tensor(y.shape(), rng);
  Tensor dx(x.shape());
  kernels::reflect_pad_backward(d, 1, dx);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) lhs += double(y.data()[i]) * d.data()[i];
  for (std::size_t i = 0; i < x.numel(); ++i) rhs += double(x.data()[i]) * dx.data()[i];
  CHECK(lhs == doctest::Approx(rhs));
}

TEST_CASE("convolution geometry rejects empty outputs") {
  CHECK_THROWS_AS(kernels::conv_geometry(1, 2, 2, 1, 4, 1, 0), ShapeError);
  const auto g = kernels::conv_geometry(1, 256, 256, 8, 4, 2, 1);
  CHECK(g.out_h == 128);
}
