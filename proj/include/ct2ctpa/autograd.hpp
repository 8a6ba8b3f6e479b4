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

// Minimal reverse-mode autodiff over 4D tensors. A `Var` owns its value and,
// when it requires a gradient, the closure that pushes its gradient to its
// inputs. Parameters are leaf Vars that persist across steps; everything else
// is rebuilt on every forward pass.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ct2ctpa/tensor.hpp"

namespace ct2ctpa::ag {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily by backward()
  bool requires_grad = false;
  std::vector<Var> inputs;
  std::function<void(Node&)> backward_fn;

  const Shape& shape() const { return value.shape(); }
  Tensor& grad_buffer();
};

// Disables graph construction in its scope (inference, frozen evaluation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

Var constant(Tensor t);
Var parameter(Tensor t);
// Same value, no history; gradients stop here.
Var detach(const Var& v);

// Seeds d(root)/d(root) = 1 and propagates to every reachable node.
// The root must hold a single element.
void backward(const Var& root);

float item(const Var& v);

// Layers
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias,
                     int stride, int pad, int out_pad);
Var reflect_pad(const Var& x, int pad);
Var instance_norm(const Var& x, float eps = 1e-5f);
Var relu(const Var& x);
Var leaky_relu(const Var& x, float slope);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var add(const Var& a, const Var& b);
Var concat_channels(const Var& a, const Var& b);
Var global_avg_pool(const Var& x);
Var global_max_pool(const Var& x);
// Log-mean-exp pooling: between average (r -> 0) and max (r -> inf).
Var lse_pool(const Var& x, float r);
// Per-plane soft intensity histogram over [lo, hi] with triangular bins,
// returned as log(1 + h / eps) in (N, C * bins, 1, 1).
Var log_histogram(const Var& x, int bins, float lo, float hi, double eps = 1e-4);
Var scale(const Var& x, float s);

// Scalar-producing
Var mean(const Var& x);
Var sum_scalars(const std::vector<Var>& terms);

// Losses (all reduce to a single element)
// Mean binary cross-entropy of sigmoid(logits) against a constant label.
Var bce_with_logits(const Var& logits, float target);
// Mean of (x - target)^2.
Var mse_to_constant(const Var& x, float target);
// Mean |a - b|. b is treated as a constant target.
Var l1_loss(const Var& a, const Var& b);
// Mean SSIM over every plane and valid window position (Gaussian window,
// unit exponents, C3 = C2/2). y is treated as a constant target.
Var ssim(const Var& x, const Var& y, int window, double sigma, double c1, double c2);
// Cross-entropy of a (N, 2, 1, 1) logit pair against per-sample class labels.
Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels);

}  // namespace ct2ctpa::ag
