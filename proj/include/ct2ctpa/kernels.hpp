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

// Compute kernels behind the autograd ops. The default implementations are
// OpenMP-parallel (im2col + GEMM for convolutions); `reference::` holds
// direct serial loops that the tests and the benchmark compare against.

#include <span>

#include "ct2ctpa/tensor.hpp"

namespace ct2ctpa::kernels {

struct ConvGeom {
  int in_c = 0, in_h = 0, in_w = 0;
  int out_c = 0, out_h = 0, out_w = 0;
  int k = 1, stride = 1, pad = 0;

  int col_rows() const { return in_c * k * k; }
  int col_cols() const { return out_h * out_w; }
};

// Geometry of a strided convolution; throws ShapeError if the output is empty.
ConvGeom conv_geometry(int in_c, int in_h, int in_w, int out_c, int k,
                       int stride, int pad);
// Geometry of the matching transposed convolution, expressed as the forward
// convolution it is the adjoint of (`in_*` is the transposed conv's output).
ConvGeom conv_transpose_geometry(int in_c, int in_h, int in_w, int out_c,
                                 int k, int stride, int pad, int out_pad);

void im2col(const float* img, const ConvGeom& g, float* col);
// Accumulates into img.
void col2im(const float* col, const ConvGeom& g, float* img);

// y = conv(x, weight[out_c, in_c, k, k]) + bias
Tensor conv2d_forward(const Tensor& x, const Tensor& weight,
                      std::span<const float> bias, int stride, int pad);
// Accumulates gradients into dx (if non-null), dweight and dbias.
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                     int stride, int pad, Tensor* dx, Tensor& dweight,
                     std::span<float> dbias);

// Transposed convolution, weight layout [in_c, out_c, k, k].
Tensor conv_transpose2d_forward(const Tensor& x, const Tensor& weight,
                                std::span<const float> bias, int stride,
                                int pad, int out_pad);
void conv_transpose2d_backward(const Tensor& x, const Tensor& weight,
                               const Tensor& dy, int stride, int pad,
                               Tensor* dx, Tensor& dweight,
                               std::span<float> dbias);

Tensor reflect_pad(const Tensor& x, int pad);
// Accumulates into dx.
void reflect_pad_backward(const Tensor& dy, int pad, Tensor& dx);

// Per-(n, c) plane normalization without affine parameters. `mean` and
// `inv_std` receive one value per plane.
Tensor instance_norm_forward(const Tensor& x, float eps,
                             std::vector<float>& mean,
                             std::vector<float>& inv_std);
void instance_norm_backward(const Tensor& y, const Tensor& dy,
                            const std::vector<float>& inv_std, Tensor& dx);

namespace reference {

Tensor conv2d_forward(const Tensor& x, const Tensor& weight,
                      std::span<const float> bias, int stride, int pad);
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                     int stride, int pad, Tensor* dx, Tensor& dweight,
                     std::span<float> dbias);
Tensor conv_transpose2d_forward(const Tensor& x, const Tensor& weight,
                                std::span<const float> bias, int stride,
                                int pad, int out_pad);
Tensor instance_norm_forward(const Tensor& x, float eps);

}  // namespace reference

}  // namespace ct2ctpa::kernels
