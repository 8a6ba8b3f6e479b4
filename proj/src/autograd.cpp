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

#include "ct2ctpa/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <unordered_set>

#include "ct2ctpa/kernels.hpp"

namespace ct2ctpa::ag {
namespace {

thread_local bool g_grad_enabled = true;

// Builds a result node; history is attached only when some input needs it.
Var make_result(Tensor value, std::vector<Var> inputs,
                std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const Var& in : inputs) needs = needs || (in && in->requires_grad);
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward_fn = std::move(fn);
  }
  return node;
}

std::span<const float> maybe_span(const Var& v) {
  if (!v) return {};
  return v->value.span();
}

void require_scalar(const Var& v, const char* what) {
  if (v->value.numel() != 1) {
    throw ShapeError(std::string(what) + " expects a single-element tensor, got " +
                     v->shape().str());
  }
}

Tensor scalar_tensor(double v) {
  return Tensor(Shape{1, 1, 1, 1}, static_cast<float>(v));
}

template <typename Fwd, typename Deriv>
Var unary(const Var& x, Fwd fwd, Deriv deriv_from_xy) {
  Tensor y(x->shape());
  const float* xp = x->value.data();
  float* yp = y.data();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(y.numel());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) yp[i] = fwd(xp[i]);
  return make_result(std::move(y), {x}, [deriv_from_xy](Node& self) {
    Node& in = *self.inputs[0];
    float* gx = in.grad_buffer().data();
    const float* gy = self.grad.data();
    const float* xv = in.value.data();
    const float* yv = self.value.data();
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(self.value.numel());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < m; ++i) gx[i] += gy[i] * deriv_from_xy(xv[i], yv[i]);
  });
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape());
  return grad;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var constant(Tensor t) {
  auto node = std::make_shared<Node>();
  node->value = std::move(t);
  return node;
}

Var parameter(Tensor t) {
  auto node = std::make_shared<Node>();
  node->value = std::move(t);
  node->requires_grad = true;
  return node;
}

Var detach(const Var& v) { return constant(v->value); }

void backward(const Var& root) {
  require_scalar(root, "backward");
  if (!root->requires_grad) return;
  // Iterative post-order DFS yields a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child && child->requires_grad && child->backward_fn &&
          seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }
  root->grad_buffer().fill(0.0f);
  root->grad.data()[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad.empty() || !n->backward_fn) continue;
    n->backward_fn(*n);
    // Interior gradients are no longer needed once propagated.
    if (n != root.get()) n->grad = Tensor();
  }
}

float item(const Var& v) {
  require_scalar(v, "item");
  return v->value.data()[0];
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  Tensor y = kernels::conv2d_forward(x->value, weight->value, maybe_span(bias),
                                     stride, pad);
  return make_result(std::move(y), {x, weight, bias},
                     [stride, pad](Node& self) {
    Node& in = *self.inputs[0];
    Node& w = *self.inputs[1];
    Node* b = self.inputs[2].get();
    Tensor* dx = in.requires_grad ? &in.grad_buffer() : nullptr;
    Tensor scratch;
    Tensor& dw = w.requires_grad ? w.grad_buffer() : (scratch = Tensor(w.value.shape()));
    FloatBuffer bscratch;
    std::span<float> db;
    if (b) {
      if (b->requires_grad) {
        db = b->grad_buffer().span();
      } else {
        bscratch.assign(b->value.numel(), 0.0f);
        db = bscratch;
      }
    }
    kernels::conv2d_backward(in.value, w.value, self.grad, stride, pad, dx, dw, db);
  });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias,
                     int stride, int pad, int out_pad) {
  Tensor y = kernels::conv_transpose2d_forward(x->value, weight->value,
                                               maybe_span(bias), stride, pad, out_pad);
  return make_result(std::move(y), {x, weight, bias},
                     [stride, pad](Node& self) {
    Node& in = *self.inputs[0];
    Node& w = *self.inputs[1];
    Node* b = self.inputs[2].get();
    Tensor* dx = in.requires_grad ? &in.grad_buffer() : nullptr;
    Tensor scratch;
    Tensor& dw = w.requires_grad ? w.grad_buffer() : (scratch = Tensor(w.value.shape()));
    FloatBuffer bscratch;
    std::span<float> db;
    if (b) {
      if (b->requires_grad) {
        db = b->grad_buffer().span();
      } else {
        bscratch.assign(b->value.numel(), 0.0f);
        db = bscratch;
      }
    }
    kernels::conv_transpose2d_backward(in.value, w.value, self.grad, stride, pad,
                                       dx, dw, db);
  });
}

Var reflect_pad(const Var& x, int pad) {
  return make_result(kernels::reflect_pad(x->value, pad), {x}, [pad](Node& self) {
    kernels::reflect_pad_backward(self.grad, pad, self.inputs[0]->grad_buffer());
  });
}

Var instance_norm(const Var& x, float eps) {
  std::vector<float> mean;
  std::vector<float> inv_std;
  Tensor y = kernels::instance_norm_forward(x->value, eps, mean, inv_std);
  return make_result(std::move(y), {x},
                     [inv_std = std::move(inv_std)](Node& self) {
    kernels::instance_norm_backward(self.value, self.grad, inv_std,
                                    self.inputs[0]->grad_buffer());
  });
}

Var relu(const Var& x) {
  return unary(
      x, [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Var leaky_relu(const Var& x, float slope) {
  return unary(
      x, [slope](float v) { return v > 0.0f ? v : slope * v; },
      [slope](float v, float) { return v > 0.0f ? 1.0f : slope; });
}

Var tanh(const Var& x) {
  return unary(
      x, [](float v) { return std::tanh(v); },
      [](float, float y) { return 1.0f - y * y; });
}

Var sigmoid(const Var& x) {
  return unary(
      x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
      [](float, float y) { return y * (1.0f - y); });
}

Var scale(const Var& x, float s) {
  return unary(
      x, [s](float v) { return s * v; }, [s](float, float) { return s; });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a->shape(), b->shape(), "add");
  Tensor y(a->shape());
  for (std::size_t i = 0; i < y.numel(); ++i) {
    y.data()[i] = a->value.data()[i] + b->value.data()[i];
  }
  return make_result(std::move(y), {a, b}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      float* g = in.grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad.data()[i];
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Shape& sa = a->shape();
  const Shape& sb = b->shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: " + sa.str() + " vs " + sb.str());
  }
  Tensor y(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t pa = sa.c * sa.plane();
  const std::size_t pb = sb.c * sb.plane();
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a->value.data() + n * pa, pa, y.data() + n * (pa + pb));
    std::copy_n(b->value.data() + n * pb, pb, y.data() + n * (pa + pb) + pa);
  }
  return make_result(std::move(y), {a, b}, [pa, pb, n_batch = sa.n](Node& self) {
    Node& ia = *self.inputs[0];
    Node& ib = *self.inputs[1];
    for (int n = 0; n < n_batch; ++n) {
      const float* g = self.grad.data() + n * (pa + pb);
      if (ia.requires_grad) {
        float* d = ia.grad_buffer().data() + n * pa;
        for (std::size_t i = 0; i < pa; ++i) d[i] += g[i];
      }
      if (ib.requires_grad) {
        float* d = ib.grad_buffer().data() + n * pb;
        for (std::size_t i = 0; i < pb; ++i) d[i] += g[pa + i];
      }
    }
  });
}

Var global_avg_pool(const Var& x) {
  const Shape& s = x->shape();
  Tensor y(Shape{s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float* p = x->value.plane(n, c);
      double acc = 0.0;
      for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
      y.at(n, c, 0, 0) = static_cast<float>(acc / static_cast<double>(s.plane()));
    }
  return make_result(std::move(y), {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    const Shape& s = in.shape();
    const float inv = 1.0f / static_cast<float>(s.plane());
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        float* d = in.grad_buffer().plane(n, c);
        const float g = self.grad.at(n, c, 0, 0) * inv;
        for (std::size_t i = 0; i < s.plane(); ++i) d[i] += g;
      }
  });
}

Var global_max_pool(const Var& x) {
  const Shape& s = x->shape();
  Tensor y(Shape{s.n, s.c, 1, 1});
  auto arg = std::make_shared<std::vector<std::size_t>>(static_cast<std::size_t>(s.n) * s.c);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float* p = x->value.plane(n, c);
      // first maximum wins ties
      const std::size_t k = static_cast<std::size_t>(std::max_element(p, p + s.plane()) - p);
      (*arg)[static_cast<std::size_t>(n) * s.c + c] = k;
      y.at(n, c, 0, 0) = p[k];
    }
  return make_result(std::move(y), {x}, [arg](Node& self) {
    Node& in = *self.inputs[0];
    const Shape& s = in.shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        in.grad_buffer().plane(n, c)[(*arg)[static_cast<std::size_t>(n) * s.c + c]] +=
            self.grad.at(n, c, 0, 0);
      }
  });
}

Var lse_pool(const Var& x, float r) {
  if (!(r > 0.0f)) throw ConfigError("lse_pool: sharpness must be positive");
  const Shape& s = x->shape();
  Tensor y(Shape{s.n, s.c, 1, 1});
  // Softmax weights double as the backward coefficients.
  auto weights = std::make_shared<Tensor>(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float* p = x->value.plane(n, c);
      float* w = weights->plane(n, c);
      const float m = *std::max_element(p, p + s.plane());
      double z = 0.0;
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const double e = std::exp(static_cast<double>(r) * (p[i] - m));
        w[i] = static_cast<float>(e);
        z += e;
      }
      for (std::size_t i = 0; i < s.plane(); ++i) w[i] = static_cast<float>(w[i] / z);
      y.at(n, c, 0, 0) =
          static_cast<float>(m + std::log(z / static_cast<double>(s.plane())) / r);
    }
  return make_result(std::move(y), {x}, [weights](Node& self) {
    Node& in = *self.inputs[0];
    const Shape& s = in.shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        float* d = in.grad_buffer().plane(n, c);
        const float* w = weights->plane(n, c);
        const float g = self.grad.at(n, c, 0, 0);
        for (std::size_t i = 0; i < s.plane(); ++i) d[i] += g * w[i];
      }
  });
}

Var log_histogram(const Var& x, int bins, float lo, float hi, double eps) {
  if (bins < 1 || !(hi > lo) || !(eps > 0.0 && eps < 1.0)) {
    throw ConfigError("log_histogram: need bins >= 1, hi > lo and eps in (0, 1)");
  }
  const Shape& s = x->shape();
  const int planes = s.n * s.c;
  const double w = (static_cast<double>(hi) - lo) / bins;
  const std::size_t plane = s.plane();
  auto hist = std::make_shared<std::vector<double>>(static_cast<std::size_t>(planes) * bins, 0.0);
  for (int p = 0; p < planes; ++p) {
    const float* v = x->value.data() + p * plane;
    double* h = hist->data() + static_cast<std::size_t>(p) * bins;
    for (std::size_t i = 0; i < plane; ++i) {
      // triangular membership of the two nearest bin centres
      const double u = (v[i] - lo) / w - 0.5;
      const int k0 = static_cast<int>(std::floor(u));
      const double f = u - k0;
      if (k0 >= 0 && k0 < bins) h[k0] += 1.0 - f;
      if (k0 + 1 >= 0 && k0 + 1 < bins) h[k0 + 1] += f;
    }
    for (int k = 0; k < bins; ++k) h[k] /= static_cast<double>(plane);
  }
  Tensor y(Shape{s.n, s.c * bins, 1, 1});
  for (std::size_t j = 0; j < hist->size(); ++j) {
    y.data()[j] = static_cast<float>(std::log1p((*hist)[j] / eps));
  }
  return make_result(std::move(y), {x}, [hist, bins, lo, w, eps](Node& self) {
    Node& in = *self.inputs[0];
    const Shape& s = in.shape();
    const std::size_t plane = s.plane();
    for (int p = 0; p < s.n * s.c; ++p) {
      std::vector<double> dh(bins);
      for (int k = 0; k < bins; ++k) {
        const std::size_t j = static_cast<std::size_t>(p) * bins + k;
        dh[k] = self.grad.data()[j] / ((eps + (*hist)[j]) * static_cast<double>(plane) * w);
      }
      const float* v = in.value.data() + p * plane;
      float* d = in.grad_buffer().data() + p * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double u = (v[i] - lo) / w - 0.5;
        const int k0 = static_cast<int>(std::floor(u));
        double g = 0.0;
        if (k0 >= 0 && k0 < bins) g -= dh[k0];
        if (k0 + 1 >= 0 && k0 + 1 < bins) g += dh[k0 + 1];
        d[i] += static_cast<float>(g);
      }
    }
  });
}

Var mean(const Var& x) {
  double acc = 0.0;
  for (float v : x->value.span()) acc += v;
  const double n = static_cast<double>(x->value.numel());
  return make_result(scalar_tensor(acc / n), {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    const float g = self.grad.data()[0] / static_cast<float>(in.value.numel());
    for (float& d : in.grad_buffer().span()) d += g;
  });
}

Var sum_scalars(const std::vector<Var>& terms) {
  double acc = 0.0;
  for (const Var& t : terms) {
    require_scalar(t, "sum_scalars");
    acc += t->value.data()[0];
  }
  return make_result(scalar_tensor(acc), terms, [](Node& self) {
    const float g = self.grad.data()[0];
    for (const Var& t : self.inputs) {
      if (t->requires_grad) t->grad_buffer().data()[0] += g;
    }
  });
}

Var bce_with_logits(const Var& logits, float target) {
  double acc = 0.0;
  for (float l : logits->value.span()) {
    // max(l,0) - l*t + log(1 + exp(-|l|)) is the stable form.
    acc += std::max(l, 0.0f) - l * target + std::log1p(std::exp(-std::fabs(l)));
  }
  const double n = static_cast<double>(logits->value.numel());
  if (!std::isfinite(acc)) throw NumericError("bce_with_logits: non-finite logits");
  return make_result(scalar_tensor(acc / n), {logits}, [target](Node& self) {
    Node& in = *self.inputs[0];
    const float g = self.grad.data()[0] / static_cast<float>(in.value.numel());
    float* d = in.grad_buffer().data();
    const float* l = in.value.data();
    for (std::size_t i = 0; i < in.value.numel(); ++i) {
      const float s = 1.0f / (1.0f + std::exp(-l[i]));
      d[i] += g * (s - target);
    }
  });
}

Var mse_to_constant(const Var& x, float target) {
  double acc = 0.0;
  for (float v : x->value.span()) {
    const double d = static_cast<double>(v) - target;
    acc += d * d;
  }
  if (!std::isfinite(acc)) throw NumericError("mse_to_constant: non-finite input");
  const double n = static_cast<double>(x->value.numel());
  return make_result(scalar_tensor(acc / n), {x}, [target](Node& self) {
    Node& in = *self.inputs[0];
    const float g = 2.0f * self.grad.data()[0] / static_cast<float>(in.value.numel());
    float* d = in.grad_buffer().data();
    const float* v = in.value.data();
    for (std::size_t i = 0; i < in.value.numel(); ++i) d[i] += g * (v[i] - target);
  });
}

Var l1_loss(const Var& a, const Var& b) {
  require_same_shape(a->shape(), b->shape(), "l1_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < a->value.numel(); ++i) {
    acc += std::fabs(static_cast<double>(a->value.data()[i]) - b->value.data()[i]);
  }
  const double n = static_cast<double>(a->value.numel());
  return make_result(scalar_tensor(acc / n), {a, b}, [](Node& self) {
    Node& in = *self.inputs[0];
    const Node& ref = *self.inputs[1];
    if (!in.requires_grad) return;
    const float g = self.grad.data()[0] / static_cast<float>(in.value.numel());
    float* d = in.grad_buffer().data();
    for (std::size_t i = 0; i < in.value.numel(); ++i) {
      const float diff = in.value.data()[i] - ref.value.data()[i];
      d[i] += diff > 0.0f ? g : (diff < 0.0f ? -g : 0.0f);
    }
  });
}

Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels) {
  const Shape& s = logits->shape();
  if (s.h != 1 || s.w != 1 || static_cast<std::size_t>(s.n) != labels.size()) {
    throw ShapeError("softmax_cross_entropy: logits " + s.str() + " with " +
                     std::to_string(labels.size()) + " labels");
  }
  std::vector<float> probs(s.numel());
  double acc = 0.0;
  for (int n = 0; n < s.n; ++n) {
    const float* l = logits->value.data() + n * s.c;
    const float mx = *std::max_element(l, l + s.c);
    double z = 0.0;
    for (int c = 0; c < s.c; ++c) z += std::exp(static_cast<double>(l[c]) - mx);
    for (int c = 0; c < s.c; ++c) {
      probs[n * s.c + c] = static_cast<float>(std::exp(static_cast<double>(l[c]) - mx) / z);
    }
    if (labels[n] < 0 || labels[n] >= s.c) throw ConfigError("label out of range");
    acc += -(static_cast<double>(l[labels[n]]) - mx - std::log(z));
  }
  return make_result(scalar_tensor(acc / s.n), {logits},
                     [probs = std::move(probs), labels, s](Node& self) {
    Node& in = *self.inputs[0];
    const float g = self.grad.data()[0] / static_cast<float>(s.n);
    float* d = in.grad_buffer().data();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const float onehot = (c == labels[n]) ? 1.0f : 0.0f;
        d[n * s.c + c] += g * (probs[n * s.c + c] - onehot);
      }
  });
}

namespace {

std::vector<double> gaussian_taps(int window, double sigma) {
  std::vector<double> g(window);
  const double c = (window - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    g[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Valid separable correlation: (h, w) -> (h - k + 1, w - k + 1).
std::vector<double> correlate_valid(const std::vector<double>& in, int h, int w,
                                    const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += g[t] * in[static_cast<std::size_t>(r) * w + c + t];
      tmp[static_cast<std::size_t>(r) * ow + c] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += g[t] * tmp[static_cast<std::size_t>(r + t) * ow + c];
      out[static_cast<std::size_t>(r) * ow + c] = acc;
    }
  }
  return out;
}

// Adjoint of correlate_valid: scatters (oh, ow) back onto (h, w).
std::vector<double> correlate_valid_adjoint(const std::vector<double>& in, int h, int w,
                                            const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      const double v = in[static_cast<std::size_t>(r) * ow + c];
      for (int t = 0; t < k; ++t) tmp[static_cast<std::size_t>(r + t) * ow + c] += g[t] * v;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(h) * w, 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < ow; ++c) {
      const double v = tmp[static_cast<std::size_t>(r) * ow + c];
      for (int t = 0; t < k; ++t) out[static_cast<std::size_t>(r) * w + c + t] += g[t] * v;
    }
  }
  return out;
}

}  // namespace

Var ssim(const Var& x, const Var& y, int window, double sigma, double c1, double c2) {
  const Shape s = x->shape();
  require_same_shape(s, y->shape(), "ssim");
  if (s.h < window || s.w < window) {
    throw ShapeError("ssim: image " + s.str() + " smaller than window " + std::to_string(window));
  }
  const auto g = gaussian_taps(window, sigma);
  const int planes = s.n * s.c;
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t positions = static_cast<std::size_t>(s.h - window + 1) * (s.w - window + 1);
  // Per-position partial derivatives of S, kept for the backward pass.
  auto A = std::make_shared<std::vector<std::vector<double>>>(planes);
  auto B = std::make_shared<std::vector<std::vector<double>>>(planes);
  auto C = std::make_shared<std::vector<std::vector<double>>>(planes);
  double total = 0.0;
  for (int p = 0; p < planes; ++p) {
    const float* xp = x->value.data() + p * plane;
    const float* yp = y->value.data() + p * plane;
    std::vector<double> xv(xp, xp + plane), yv(yp, yp + plane), xx(plane), yy(plane), xy(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      xx[i] = xv[i] * xv[i];
      yy[i] = yv[i] * yv[i];
      xy[i] = xv[i] * yv[i];
    }
    const auto mx = correlate_valid(xv, s.h, s.w, g);
    const auto my = correlate_valid(yv, s.h, s.w, g);
    const auto exx = correlate_valid(xx, s.h, s.w, g);
    const auto eyy = correlate_valid(yy, s.h, s.w, g);
    const auto exy = correlate_valid(xy, s.h, s.w, g);
    auto& a = (*A)[p];
    auto& b = (*B)[p];
    auto& c = (*C)[p];
    a.resize(positions);
    b.resize(positions);
    c.resize(positions);
    for (std::size_t i = 0; i < positions; ++i) {
      const double vx = exx[i] - mx[i] * mx[i];
      const double vy = eyy[i] - my[i] * my[i];
      const double cov = exy[i] - mx[i] * my[i];
      const double n1 = 2.0 * mx[i] * my[i] + c1, d1 = mx[i] * mx[i] + my[i] * my[i] + c1;
      const double n2 = 2.0 * cov + c2, d2 = vx + vy + c2;
      const double lum = n1 / d1, cs = n2 / d2;
      total += lum * cs;
      const double dmu = cs * (2.0 * my[i] / d1 - n1 * 2.0 * mx[i] / (d1 * d1));
      b[i] = -lum * n2 / (d2 * d2);
      c[i] = 2.0 * lum / d2;
      a[i] = dmu - 2.0 * mx[i] * b[i] - my[i] * c[i];
    }
  }
  const double count = static_cast<double>(planes) * positions;
  return make_result(scalar_tensor(total / count), {x, y},
                     [A, B, C, g, s, planes, plane, count](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    const Node& ref = *self.inputs[1];
    const double up = self.grad.data()[0] / count;
    float* d = in.grad_buffer().data();
    for (int p = 0; p < planes; ++p) {
      const auto ta = correlate_valid_adjoint((*A)[p], s.h, s.w, g);
      const auto tb = correlate_valid_adjoint((*B)[p], s.h, s.w, g);
      const auto tc = correlate_valid_adjoint((*C)[p], s.h, s.w, g);
      const float* xp = in.value.data() + p * plane;
      const float* yp = ref.value.data() + p * plane;
      float* dp = d + p * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        dp[i] += static_cast<float>(up * (ta[i] + 2.0 * xp[i] * tb[i] + yp[i] * tc[i]));
      }
    }
  });
}

}  // namespace ct2ctpa::ag
