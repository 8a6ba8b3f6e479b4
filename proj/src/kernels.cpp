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

#include "ct2ctpa/kernels.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

namespace ct2ctpa::kernels {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void check_weight(const Tensor& x, const Tensor& weight, int weight_in_dim,
                  const char* op) {
  const Shape& ws = weight.shape();
  const int in_c = weight_in_dim == 1 ? ws.c : ws.n;
  if (ws.h != ws.w || in_c != x.shape().c) {
    throw ShapeError(std::string(op) + ": weight " + ws.str() +
                     " incompatible with input " + x.shape().str());
  }
}

bool is_pointwise(const ConvGeom& g) {
  return g.k == 1 && g.stride == 1 && g.pad == 0;
}

}  // namespace

ConvGeom conv_geometry(int in_c, int in_h, int in_w, int out_c, int k,
                       int stride, int pad) {
  ConvGeom g;
  g.in_c = in_c;
  g.in_h = in_h;
  g.in_w = in_w;
  g.out_c = out_c;
  g.k = k;
  g.stride = stride;
  g.pad = pad;
  g.out_h = (in_h + 2 * pad - k) / stride + 1;
  g.out_w = (in_w + 2 * pad - k) / stride + 1;
  if (in_h + 2 * pad < k || in_w + 2 * pad < k || g.out_h <= 0 || g.out_w <= 0) {
    throw ShapeError("convolution k=" + std::to_string(k) + " s=" +
                     std::to_string(stride) + " p=" + std::to_string(pad) +
                     " produces an empty output for input " +
                     std::to_string(in_h) + "x" + std::to_string(in_w));
  }
  return g;
}

ConvGeom conv_transpose_geometry(int in_c, int in_h, int in_w, int out_c,
                                 int k, int stride, int pad, int out_pad) {
  // The transposed conv maps (in_c, in_h, in_w) -> (out_c, H, W); its adjoint
  // is a forward conv from (out_c, H, W) back to (in_c, in_h, in_w).
  const int out_h = (in_h - 1) * stride - 2 * pad + k + out_pad;
  const int out_w = (in_w - 1) * stride - 2 * pad + k + out_pad;
  if (out_h <= 0 || out_w <= 0 || out_pad >= stride) {
    throw ShapeError("invalid transposed convolution geometry");
  }
  ConvGeom g;
  g.in_c = out_c;
  g.in_h = out_h;
  g.in_w = out_w;
  g.out_c = in_c;
  g.out_h = in_h;
  g.out_w = in_w;
  g.k = k;
  g.stride = stride;
  g.pad = pad;
  return g;
}

void im2col(const float* img, const ConvGeom& g, float* col) {
  const int rows = g.col_rows();
  const int plane = g.col_cols();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int kx = r % g.k;
    const int ky = (r / g.k) % g.k;
    const int c = r / (g.k * g.k);
    const float* src = img + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    float* dst = col + static_cast<std::size_t>(r) * plane;
    for (int oy = 0; oy < g.out_h; ++oy) {
      const int iy = oy * g.stride - g.pad + ky;
      float* drow = dst + static_cast<std::size_t>(oy) * g.out_w;
      if (iy < 0 || iy >= g.in_h) {
        std::memset(drow, 0, sizeof(float) * g.out_w);
        continue;
      }
      const float* srow = src + static_cast<std::size_t>(iy) * g.in_w;
      for (int ox = 0; ox < g.out_w; ++ox) {
        const int ix = ox * g.stride - g.pad + kx;
        drow[ox] = (ix >= 0 && ix < g.in_w) ? srow[ix] : 0.0f;
      }
    }
  }
}

void col2im(const float* col, const ConvGeom& g, float* img) {
  const int plane = g.col_cols();
  // Each thread owns whole channels, so accumulation never races.
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.in_c; ++c) {
    float* dst = img + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const int r = (c * g.k + ky) * g.k + kx;
        const float* src = col + static_cast<std::size_t>(r) * plane;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          float* drow = dst + static_cast<std::size_t>(iy) * g.in_w;
          const float* srow = src + static_cast<std::size_t>(oy) * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

Tensor conv2d_forward(const Tensor& x, const Tensor& weight,
                      std::span<const float> bias, int stride, int pad) {
  check_weight(x, weight, 1, "conv2d");
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const ConvGeom g = conv_geometry(xs.c, xs.h, xs.w, ws.n, ws.h, stride, pad);
  Tensor y(Shape{xs.n, g.out_c, g.out_h, g.out_w});
  const bool pointwise = is_pointwise(g);
  FloatBuffer col(pointwise ? 0 : static_cast<std::size_t>(g.col_rows()) * g.col_cols());
  ConstMapMat wm(weight.data(), g.out_c, g.col_rows());
  for (int n = 0; n < xs.n; ++n) {
    const float* colp = x.plane(n, 0);
    if (!pointwise) {
      im2col(x.plane(n, 0), g, col.data());
      colp = col.data();
    }
    ConstMapMat cm(colp, g.col_rows(), g.col_cols());
    MapMat ym(y.plane(n, 0), g.out_c, g.col_cols());
    ym.noalias() = wm * cm;
    if (!bias.empty()) {
      for (int oc = 0; oc < g.out_c; ++oc) ym.row(oc).array() += bias[oc];
    }
  }
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                     int stride, int pad, Tensor* dx, Tensor& dweight,
                     std::span<float> dbias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const ConvGeom g = conv_geometry(xs.c, xs.h, xs.w, ws.n, ws.h, stride, pad);
  const bool pointwise = is_pointwise(g);
  const std::size_t col_size = static_cast<std::size_t>(g.col_rows()) * g.col_cols();
  FloatBuffer col(pointwise ? 0 : col_size);
  FloatBuffer dcol(dx && !pointwise ? col_size : 0);
  ConstMapMat wm(weight.data(), g.out_c, g.col_rows());
  MapMat dwm(dweight.data(), g.out_c, g.col_rows());
  for (int n = 0; n < xs.n; ++n) {
    ConstMapMat dym(dy.plane(n, 0), g.out_c, g.col_cols());
    const float* colp = x.plane(n, 0);
    if (!pointwise) {
      im2col(x.plane(n, 0), g, col.data());
      colp = col.data();
    }
    ConstMapMat cm(colp, g.col_rows(), g.col_cols());
    dwm.noalias() += dym * cm.transpose();
    if (!dbias.empty()) {
      for (int oc = 0; oc < g.out_c; ++oc) dbias[oc] += dym.row(oc).sum();
    }
    if (dx) {
      if (pointwise) {
        MapMat dxm(dx->plane(n, 0), g.col_rows(), g.col_cols());
        dxm.noalias() += wm.transpose() * dym;
      } else {
        MapMat dcm(dcol.data(), g.col_rows(), g.col_cols());
        dcm.noalias() = wm.transpose() * dym;
        col2im(dcol.data(), g, dx->plane(n, 0));
      }
    }
  }
}

Tensor conv_transpose2d_forward(const Tensor& x, const Tensor& weight,
                                std::span<const float> bias, int stride,
                                int pad, int out_pad) {
  check_weight(x, weight, 0, "conv_transpose2d");
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const ConvGeom g = conv_transpose_geometry(xs.c, xs.h, xs.w, ws.c, ws.h,
                                             stride, pad, out_pad);
  Tensor y(Shape{xs.n, g.in_c, g.in_h, g.in_w});
  FloatBuffer col(static_cast<std::size_t>(g.col_rows()) * g.col_cols());
  // weight as [in_c(x) , out_c(y) * k * k]
  ConstMapMat wm(weight.data(), g.out_c, g.col_rows());
  for (int n = 0; n < xs.n; ++n) {
    ConstMapMat xm(x.plane(n, 0), g.out_c, g.col_cols());
    MapMat cm(col.data(), g.col_rows(), g.col_cols());
    cm.noalias() = wm.transpose() * xm;
    col2im(col.data(), g, y.plane(n, 0));
    if (!bias.empty()) {
      for (int oc = 0; oc < g.in_c; ++oc) {
        float* p = y.plane(n, oc);
        for (std::size_t i = 0; i < y.shape().plane(); ++i) p[i] += bias[oc];
      }
    }
  }
  return y;
}

void conv_transpose2d_backward(const Tensor& x, const Tensor& weight,
                               const Tensor& dy, int stride, int pad,
                               Tensor* dx, Tensor& dweight,
                               std::span<float> dbias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const int out_pad = dy.shape().h - ((xs.h - 1) * stride - 2 * pad + ws.h);
  const ConvGeom g = conv_transpose_geometry(xs.c, xs.h, xs.w, ws.c, ws.h,
                                             stride, pad, out_pad);
  FloatBuffer dcol(static_cast<std::size_t>(g.col_rows()) * g.col_cols());
  ConstMapMat wm(weight.data(), g.out_c, g.col_rows());
  MapMat dwm(dweight.data(), g.out_c, g.col_rows());
  for (int n = 0; n < xs.n; ++n) {
    im2col(dy.plane(n, 0), g, dcol.data());
    ConstMapMat dcm(dcol.data(), g.col_rows(), g.col_cols());
    ConstMapMat xm(x.plane(n, 0), g.out_c, g.col_cols());
    dwm.noalias() += xm * dcm.transpose();
    if (dx) {
      MapMat dxm(dx->plane(n, 0), g.out_c, g.col_cols());
      dxm.noalias() += wm * dcm;
    }
    if (!dbias.empty()) {
      for (int oc = 0; oc < g.in_c; ++oc) {
        const float* p = dy.plane(n, oc);
        float s = 0.0f;
        for (std::size_t i = 0; i < dy.shape().plane(); ++i) s += p[i];
        dbias[oc] += s;
      }
    }
  }
}

namespace {
inline int reflect_index(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}
}  // namespace

Tensor reflect_pad(const Tensor& x, int pad) {
  const Shape& s = x.shape();
  if (pad >= s.h || pad >= s.w) {
    throw ShapeError("reflection pad " + std::to_string(pad) +
                     " too large for " + s.str());
  }
  Tensor y(Shape{s.n, s.c, s.h + 2 * pad, s.w + 2 * pad});
  const int planes = s.n * s.c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const float* src = x.data() + static_cast<std::size_t>(p) * s.plane();
    float* dst = y.data() + static_cast<std::size_t>(p) * y.shape().plane();
    const int ow = s.w + 2 * pad;
    for (int yy = 0; yy < s.h + 2 * pad; ++yy) {
      const int sy = reflect_index(yy - pad, s.h);
      for (int xx = 0; xx < ow; ++xx) {
        dst[yy * ow + xx] = src[sy * s.w + reflect_index(xx - pad, s.w)];
      }
    }
  }
  return y;
}

void reflect_pad_backward(const Tensor& dy, int pad, Tensor& dx) {
  const Shape& s = dx.shape();
  const int planes = s.n * s.c;
  const int ow = s.w + 2 * pad;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const float* src = dy.data() + static_cast<std::size_t>(p) * dy.shape().plane();
    float* dst = dx.data() + static_cast<std::size_t>(p) * s.plane();
    for (int yy = 0; yy < s.h + 2 * pad; ++yy) {
      const int sy = reflect_index(yy - pad, s.h);
      for (int xx = 0; xx < ow; ++xx) {
        dst[sy * s.w + reflect_index(xx - pad, s.w)] += src[yy * ow + xx];
      }
    }
  }
}

Tensor instance_norm_forward(const Tensor& x, float eps,
                             std::vector<float>& mean,
                             std::vector<float>& inv_std) {
  const Shape& s = x.shape();
  const int planes = s.n * s.c;
  const std::size_t area = s.plane();
  mean.assign(planes, 0.0f);
  inv_std.assign(planes, 0.0f);
  Tensor y(s);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const float* src = x.data() + p * area;
    float* dst = y.data() + p * area;
    double sum = 0.0;
    for (std::size_t i = 0; i < area; ++i) sum += src[i];
    const double mu = sum / static_cast<double>(area);
    double var = 0.0;
    for (std::size_t i = 0; i < area; ++i) {
      const double d = src[i] - mu;
      var += d * d;
    }
    var /= static_cast<double>(area);
    const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
    const float muf = static_cast<float>(mu);
    for (std::size_t i = 0; i < area; ++i) dst[i] = (src[i] - muf) * inv;
    mean[p] = muf;
    inv_std[p] = inv;
  }
  return y;
}

void instance_norm_backward(const Tensor& y, const Tensor& dy,
                            const std::vector<float>& inv_std, Tensor& dx) {
  const Shape& s = y.shape();
  const int planes = s.n * s.c;
  const std::size_t area = s.plane();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const float* yp = y.data() + p * area;
    const float* g = dy.data() + p * area;
    float* out = dx.data() + p * area;
    double sum_g = 0.0;
    double sum_gy = 0.0;
    for (std::size_t i = 0; i < area; ++i) {
      sum_g += g[i];
      sum_gy += static_cast<double>(g[i]) * yp[i];
    }
    const double n = static_cast<double>(area);
    const float mg = static_cast<float>(sum_g / n);
    const float mgy = static_cast<float>(sum_gy / n);
    const float inv = inv_std[p];
    for (std::size_t i = 0; i < area; ++i) {
      out[i] += inv * (g[i] - mg - yp[i] * mgy);
    }
  }
}

namespace reference {

Tensor conv2d_forward(const Tensor& x, const Tensor& weight,
                      std::span<const float> bias, int stride, int pad) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const ConvGeom g = conv_geometry(xs.c, xs.h, xs.w, ws.n, ws.h, stride, pad);
  Tensor y(Shape{xs.n, g.out_c, g.out_h, g.out_w});
  for (int n = 0; n < xs.n; ++n)
    for (int oc = 0; oc < g.out_c; ++oc)
      for (int oy = 0; oy < g.out_h; ++oy)
        for (int ox = 0; ox < g.out_w; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[oc];
          for (int ic = 0; ic < g.in_c; ++ic)
            for (int ky = 0; ky < g.k; ++ky)
              for (int kx = 0; kx < g.k; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                acc += static_cast<double>(x.at(n, ic, iy, ix)) *
                       weight.at(oc, ic, ky, kx);
              }
          y.at(n, oc, oy, ox) = static_cast<float>(acc);
        }
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                     int stride, int pad, Tensor* dx, Tensor& dweight,
                     std::span<float> dbias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const ConvGeom g = conv_geometry(xs.c, xs.h, xs.w, ws.n, ws.h, stride, pad);
  for (int n = 0; n < xs.n; ++n)
    for (int oc = 0; oc < g.out_c; ++oc)
      for (int oy = 0; oy < g.out_h; ++oy)
        for (int ox = 0; ox < g.out_w; ++ox) {
          const float gv = dy.at(n, oc, oy, ox);
          if (!dbias.empty()) dbias[oc] += gv;
          for (int ic = 0; ic < g.in_c; ++ic)
            for (int ky = 0; ky < g.k; ++ky)
              for (int kx = 0; kx < g.k; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                dweight.at(oc, ic, ky, kx) += gv * x.at(n, ic, iy, ix);
                if (dx) dx->at(n, ic, iy, ix) += gv * weight.at(oc, ic, ky, kx);
              }
        }
}

Tensor conv_transpose2d_forward(const Tensor& x, const Tensor& weight,
                                std::span<const float> bias, int stride,
                                int pad, int out_pad) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const int k = ws.h;
  const int oh = (xs.h - 1) * stride - 2 * pad + k + out_pad;
  const int ow = (xs.w - 1) * stride - 2 * pad + k + out_pad;
  Tensor y(Shape{xs.n, ws.c, oh, ow});
  for (int n = 0; n < xs.n; ++n) {
    for (int oc = 0; oc < ws.c; ++oc) {
      for (int yy = 0; yy < oh; ++yy)
        for (int xx = 0; xx < ow; ++xx)
          y.at(n, oc, yy, xx) = bias.empty() ? 0.0f : bias[oc];
    }
    // Scatter form: every input pixel spreads its kernel footprint.
    for (int ic = 0; ic < xs.c; ++ic)
      for (int iy = 0; iy < xs.h; ++iy)
        for (int ix = 0; ix < xs.w; ++ix)
          for (int oc = 0; oc < ws.c; ++oc)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int yy = iy * stride - pad + ky;
                const int xx = ix * stride - pad + kx;
                if (yy < 0 || yy >= oh || xx < 0 || xx >= ow) continue;
                y.at(n, oc, yy, xx) += x.at(n, ic, iy, ix) * weight.at(ic, oc, ky, kx);
              }
  }
  return y;
}

Tensor instance_norm_forward(const Tensor& x, float eps) {
  const Shape& s = x.shape();
  Tensor y(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      double sum = 0.0, sq = 0.0;
      for (int i = 0; i < s.h; ++i)
        for (int j = 0; j < s.w; ++j) sum += x.at(n, c, i, j);
      const double mu = sum / static_cast<double>(s.plane());
      for (int i = 0; i < s.h; ++i)
        for (int j = 0; j < s.w; ++j) {
          const double d = x.at(n, c, i, j) - mu;
          sq += d * d;
        }
      const double inv = 1.0 / std::sqrt(sq / static_cast<double>(s.plane()) + eps);
      for (int i = 0; i < s.h; ++i)
        for (int j = 0; j < s.w; ++j)
          y.at(n, c, i, j) = static_cast<float>((x.at(n, c, i, j) - mu) * inv);
    }
  return y;
}

}  // namespace reference

}  // namespace ct2ctpa::kernels
