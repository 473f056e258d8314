// Copyright 2026 The mdshare Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <span>
#include <vector>

#include "mdl/tensor.hpp"

// Layer-level forward/backward operations over NCHW tensors. Convolution is
// im2col + gemm (grouped); batch norm keeps per-channel statistics. All
// gradient outputs ACCUMULATE into pre-zeroed buffers unless noted.

namespace mdl::ops {

struct ConvGeom {
  int in_c = 0, out_c = 0;
  int kernel_h = 0, kernel_w = 0;
  int stride = 1, padding = 0;
  int groups = 1;
  int in_h = 0, in_w = 0;

  int out_h() const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
  int out_w() const { return (in_w + 2 * padding - kernel_w) / stride + 1; }
  int patch_rows() const { return (in_c / groups) * kernel_h * kernel_w; }
};

// Scratch buffers reused across layers and steps.
struct Workspace {
  std::vector<float> col;
  std::vector<float> dcol;
  float* col_for(std::size_t n) {
    if (col.size() < n) col.resize(n);
    return col.data();
  }
  float* dcol_for(std::size_t n) {
    if (dcol.size() < n) dcol.resize(n);
    return dcol.data();
  }
};

// x: [N, Cin, H, W], w: [Cout, Cin/g, kh, kw], bias: [Cout] or empty,
// y: [N, Cout, Ho, Wo] (overwritten).
void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& bias,
                    const ConvGeom& g, Tensor& y, Workspace& ws);

// dx is overwritten when non-null; dw/dbias accumulate.
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                     const ConvGeom& g, Tensor* dx, Tensor* dw, Tensor* dbias,
                     Workspace& ws);

// Batch norm over channel dimension. Parameters/stats are [C] tensors.
// Training mode normalizes with biased batch statistics, updates running
// stats in place, and records (mean, invstd) for the backward pass.
void bn_forward_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      Tensor& running_mean, Tensor& running_var,
                      float momentum, float eps, Tensor& y, Tensor& save_mean,
                      Tensor& save_invstd);
void bn_forward_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     const Tensor& running_mean, const Tensor& running_var,
                     float eps, Tensor& y);
// dx overwritten; dgamma/dbeta accumulate.
void bn_backward(const Tensor& x, const Tensor& gamma, const Tensor& save_mean,
                 const Tensor& save_invstd, const Tensor& dy, Tensor& dx,
                 Tensor& dgamma, Tensor& dbeta);

void relu_forward(const Tensor& x, Tensor& y);
// Uses the forward *output* to mask; dx overwritten.
void relu_backward(const Tensor& y, const Tensor& dy, Tensor& dx);

// 2x2 average pooling, stride 2; spatial dims must be even.
void avgpool2_forward(const Tensor& x, Tensor& y);
void avgpool2_backward(const Tensor& dy, Tensor& dx);

// [N, C, H, W] -> [N, C]
void global_avgpool_forward(const Tensor& x, Tensor& y);
void global_avgpool_backward(const Tensor& dy, int h, int w, Tensor& dx);

// x: [N, Fin], w: [Fout, Fin], b: [Fout], y: [N, Fout] (overwritten).
void linear_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                    Tensor& y);
// dx overwritten when non-null; dw/db accumulate.
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                     Tensor* dx, Tensor& dw, Tensor& db);

// Mean cross-entropy over the batch; writes dL/dlogits (already averaged).
// Labels must lie in [0, num_classes).
float softmax_xent(const Tensor& logits, std::span<const int> labels,
                   Tensor& dlogits);

// Row-wise argmax of [N, K] logits.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace mdl::ops
