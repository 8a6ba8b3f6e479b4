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

#pragma once

#include <doctest.h>

#include <cmath>
#include <functional>

#include "ct2ctpa/autograd.hpp"
#include "ct2ctpa/rng.hpp"

namespace ct2ctpa::testing {

inline Tensor random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  Tensor t(s);
  for (float& v : t.span()) v = static_cast<float>(scale * rng.normal());
  return t;
}

// Compares the autograd gradient of a scalar function against central
// differences at every coordinate of `x`. Float arithmetic limits accuracy,
// so the tolerance is mixed absolute/relative.
inline void gradcheck(const std::function<ag::Var(const ag::Var&)>& f,
                      const Tensor& x, double eps = 1e-2, double tol = 2e-2) {
  ag::Var xv = ag::parameter(x);
  ag::Var out = f(xv);
  ag::backward(out);
  REQUIRE(!xv->grad.empty());
  const Tensor analytic = xv->grad;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    Tensor xp = x, xm = x;
    xp.data()[i] += static_cast<float>(eps);
    xm.data()[i] -= static_cast<float>(eps);
    double fp, fm;
    {
      ag::NoGradGuard g;
      fp = ag::item(f(ag::constant(xp)));
      fm = ag::item(f(ag::constant(xm)));
    }
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic.data()[i];
    CAPTURE(i);
    CHECK(std::fabs(a - numeric) <= tol * std::max(1.0, std::fabs(numeric)));
  }
}

}  // namespace ct2ctpa::testing
