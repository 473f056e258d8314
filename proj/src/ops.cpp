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

#include "mdl/ops.hpp"

#include <cmath>
#include <cstring>

#include "mdl/kernels.hpp"

namespace mdl::ops {

namespace k = mdl::kernels;

namespace {

// col layout: [Cin*kh*kw rows, Ho*Wo cols]; row index = (c*kh + ki)*kw + kj.
// Group g then occupies the contiguous row block starting at g*(Cg*kh*kw).
void im2col(const float* x, const ConvGeom& g, float* col) {
  const int oh = g.out_h(), ow = g.out_w();
  const int spatial = oh * ow;
  for (int c = 0; c < g.in_c; ++c) {
    const float* plane = x + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ki = 0; ki < g.kernel_h; ++ki) {
      for (int kj = 0; kj < g.kernel_w; ++kj) {
        float* row = col + (static_cast<std::size_t>(c) * g.kernel_h * g.kernel_w +
                            static_cast<std::size_t>(ki) * g.kernel_w + kj) *
                               spatial;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.padding + ki;
          if (iy < 0 || iy >= g.in_h) {
            std::memset(row + static_cast<std::size_t>(oy) * ow, 0,
                        sizeof(float) * ow);
            continue;
          }
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.padding + kj;
            row[oy * ow + ox] =
                (ix >= 0 && ix < g.in_w) ? plane[iy * g.in_w + ix] : 0.0f;
          }
        }
      }
    }
  }
}

// Scatter-add the col-space gradient back onto the (pre-zeroed) input grad.
void col2im(const float* col, const ConvGeom& g, float* dx) {
  const int oh = g.out_h(), ow = g.out_w();
  const int spatial = oh * ow;
  for (int c = 0; c < g.in_c; ++c) {
    float* plane = dx + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ki = 0; ki < g.kernel_h; ++ki) {
      for (int kj = 0; kj < g.kernel_w; ++kj) {
        const float* row =
            col + (static_cast<std::size_t>(c) * g.kernel_h * g.kernel_w +
                   static_cast<std::size_t>(ki) * g.kernel_w + kj) *
                      spatial;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.padding + ki;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.padding + kj;
            if (ix >= 0 && ix < g.in_w)
              plane[iy * g.in_w + ix] += row[oy * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& bias,
                    const ConvGeom& g, Tensor& y, Workspace& ws) {
  const std::size_t n = x.dim(0);
  const std::size_t spatial = static_cast<std::size_t>(g.out_h()) * g.out_w();
  const std::size_t patch = g.patch_rows();
  const int out_per_group = g.out_c / g.groups;

  require_shape(w,
                {static_cast<std::size_t>(g.out_c),
                 static_cast<std::size_t>(g.in_c / g.groups),
                 static_cast<std::size_t>(g.kernel_h),
                 static_cast<std::size_t>(g.kernel_w)},
                "conv weight");
  float* col = ws.col_for(static_cast<std::size_t>(g.in_c) * g.kernel_h *
                          g.kernel_w * spatial);

  for (std::size_t s = 0; s < n; ++s) {
    const float* xs =
        x.data() + s * static_cast<std::size_t>(g.in_c) * g.in_h * g.in_w;
    float* ys = y.data() + s * static_cast<std::size_t>(g.out_c) * spatial;
    im2col(xs, g, col);
    for (int grp = 0; grp < g.groups; ++grp) {
      k::gemm(false, false, out_per_group, spatial, patch, 1.0f,
              w.data() + static_cast<std::size_t>(grp) * out_per_group * patch,
              patch, col + static_cast<std::size_t>(grp) * patch * spatial,
              spatial, 0.0f,
              ys + static_cast<std::size_t>(grp) * out_per_group * spatial,
              spatial);
    }
    if (!bias.empty()) {
      for (int c = 0; c < g.out_c; ++c) {
        float* channel = ys + static_cast<std::size_t>(c) * spatial;
        k::affine(channel, channel, 1.0f, bias[c], spatial);
      }
    }
  }
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                     const ConvGeom& g, Tensor* dx, Tensor* dw, Tensor* dbias,
                     Workspace& ws) {
  const std::size_t n = x.dim(0);
  const std::size_t spatial = static_cast<std::size_t>(g.out_h()) * g.out_w();
  const std::size_t patch = g.patch_rows();
  const int out_per_group = g.out_c / g.groups;

  float* col = ws.col_for(static_cast<std::size_t>(g.in_c) * g.kernel_h *
                          g.kernel_w * spatial);
  float* dcol = ws.dcol_for(static_cast<std::size_t>(g.in_c) * g.kernel_h *
                            g.kernel_w * spatial);
  if (dx) dx->zero();

  for (std::size_t s = 0; s < n; ++s) {
    const float* xs =
        x.data() + s * static_cast<std::size_t>(g.in_c) * g.in_h * g.in_w;
    const float* dys =
        dy.data() + s * static_cast<std::size_t>(g.out_c) * spatial;

    if (dbias) {
      for (int c = 0; c < g.out_c; ++c)
        (*dbias)[c] += k::reduce_sum(
            dys + static_cast<std::size_t>(c) * spatial, spatial);
    }
    if (dw) im2col(xs, g, col);
    if (dw) {
      for (int grp = 0; grp < g.groups; ++grp) {
        k::gemm(false, true, out_per_group, patch, spatial, 1.0f,
                dys + static_cast<std::size_t>(grp) * out_per_group * spatial,
                spatial, col + static_cast<std::size_t>(grp) * patch * spatial,
                spatial, 1.0f,
                dw->data() +
                    static_cast<std::size_t>(grp) * out_per_group * patch,
                patch);
      }
    }
    if (dx) {
      for (int grp = 0; grp < g.groups; ++grp) {
        k::gemm(true, false, patch, spatial, out_per_group, 1.0f,
                w.data() + static_cast<std::size_t>(grp) * out_per_group * patch,
                patch,
                dys + static_cast<std::size_t>(grp) * out_per_group * spatial,
                spatial, 0.0f,
                dcol + static_cast<std::size_t>(grp) * patch * spatial,
                spatial);
      }
      col2im(dcol, g,
             dx->data() + s * static_cast<std::size_t>(g.in_c) * g.in_h * g.in_w);
    }
  }
}

void bn_forward_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      Tensor& running_mean, Tensor& running_var,
                      float momentum, float eps, Tensor& y, Tensor& save_mean,
                      Tensor& save_invstd) {
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t plane = x.numel() / (n * c);
  const double m = static_cast<double>(n * plane);

  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t s = 0; s < n; ++s)
      sum += k::reduce_sum(x.data() + (s * c + ch) * plane, plane);
    const float mean = static_cast<float>(sum / m);
    double sq = 0.0;
    for (std::size_t s = 0; s < n; ++s)
      sq += k::reduce_sumsq_diff(x.data() + (s * c + ch) * plane, mean, plane);
    const float var = static_cast<float>(sq / m);
    const float invstd = 1.0f / std::sqrt(var + eps);

    save_mean[ch] = mean;
    save_invstd[ch] = invstd;
    running_mean[ch] = (1.0f - momentum) * running_mean[ch] + momentum * mean;
    running_var[ch] = (1.0f - momentum) * running_var[ch] + momentum * var;

    const float scale = gamma[ch] * invstd;
    const float shift = beta[ch] - scale * mean;
    for (std::size_t s = 0; s < n; ++s) {
      k::affine(x.data() + (s * c + ch) * plane,
                y.data() + (s * c + ch) * plane, scale, shift, plane);
    }
  }
}

void bn_forward_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     const Tensor& running_mean, const Tensor& running_var,
                     float eps, Tensor& y) {
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t plane = x.numel() / (n * c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float invstd = 1.0f / std::sqrt(running_var[ch] + eps);
    const float scale = gamma[ch] * invstd;
    const float shift = beta[ch] - scale * running_mean[ch];
    for (std::size_t s = 0; s < n; ++s) {
      k::affine(x.data() + (s * c + ch) * plane,
                y.data() + (s * c + ch) * plane, scale, shift, plane);
    }
  }
}

void bn_backward(const Tensor& x, const Tensor& gamma, const Tensor& save_mean,
                 const Tensor& save_invstd, const Tensor& dy, Tensor& dx,
                 Tensor& dgamma, Tensor& dbeta) {
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t plane = x.numel() / (n * c);
  const double m = static_cast<double>(n * plane);

  for (std::size_t ch = 0; ch < c; ++ch) {
    const double mean = save_mean[ch];
    const double invstd = save_invstd[ch];

    double sum_dy = 0.0, sum_dy_x = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const float* dys = dy.data() + (s * c + ch) * plane;
      const float* xs = x.data() + (s * c + ch) * plane;
      sum_dy += k::reduce_sum(dys, plane);
      sum_dy_x += k::dot(dys, xs, plane);
    }
    const double sum_dy_xhat = (sum_dy_x - mean * sum_dy) * invstd;

    dbeta[ch] += static_cast<float>(sum_dy);
    dgamma[ch] += static_cast<float>(sum_dy_xhat);

    // dx_i = g*inv * (dy_i - sum_dy/m - xhat_i * sum_dy_xhat/m), expanded to
    // dx = A*dy + B*x + C with per-channel scalars.
    const double gi = static_cast<double>(gamma[ch]) * invstd;
    const double a = gi;
    const double b = -gi * invstd * invstd * sum_dy_xhat / m;
    const double cc =
        -gi * sum_dy / m + gi * invstd * invstd * sum_dy_xhat * mean / m;
    for (std::size_t s = 0; s < n; ++s) {
      const float* dys = dy.data() + (s * c + ch) * plane;
      const float* xs = x.data() + (s * c + ch) * plane;
      float* dxs = dx.data() + (s * c + ch) * plane;
      k::affine(dys, dxs, static_cast<float>(a), static_cast<float>(cc), plane);
      k::axpy(static_cast<float>(b), xs, dxs, plane);
    }
  }
}

void relu_forward(const Tensor& x, Tensor& y) {
  k::relu(x.data(), y.data(), x.numel());
}

void relu_backward(const Tensor& y, const Tensor& dy, Tensor& dx) {
  k::relu_grad(y.data(), dy.data(), dx.data(), y.numel());
}

void avgpool2_forward(const Tensor& x, Tensor& y) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  for (std::size_t s = 0; s < n * c; ++s) {
    const float* src = x.data() + s * h * w;
    float* dst = y.data() + s * oh * ow;
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j)
        dst[i * ow + j] =
            0.25f * (src[(2 * i) * w + 2 * j] + src[(2 * i) * w + 2 * j + 1] +
                     src[(2 * i + 1) * w + 2 * j] +
                     src[(2 * i + 1) * w + 2 * j + 1]);
  }
}

void avgpool2_backward(const Tensor& dy, Tensor& dx) {
  const std::size_t n = dy.dim(0), c = dy.dim(1), oh = dy.dim(2),
                    ow = dy.dim(3);
  const std::size_t w = ow * 2;
  for (std::size_t s = 0; s < n * c; ++s) {
    const float* src = dy.data() + s * oh * ow;
    float* dst = dx.data() + s * (oh * 2) * w;
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const float v = 0.25f * src[i * ow + j];
        dst[(2 * i) * w + 2 * j] = v;
        dst[(2 * i) * w + 2 * j + 1] = v;
        dst[(2 * i + 1) * w + 2 * j] = v;
        dst[(2 * i + 1) * w + 2 * j + 1] = v;
      }
  }
}

void global_avgpool_forward(const Tensor& x, Tensor& y) {
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t plane = x.numel() / (n * c);
  const float inv = 1.0f / static_cast<float>(plane);
  for (std::size_t s = 0; s < n * c; ++s)
    y[s] = inv * k::reduce_sum(x.data() + s * plane, plane);
}

void global_avgpool_backward(const Tensor& dy, int h, int w, Tensor& dx) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const float inv = 1.0f / static_cast<float>(plane);
  for (std::size_t s = 0; s < dy.numel(); ++s) {
    float* dst = dx.data() + s * plane;
    const float v = inv * dy[s];
    for (std::size_t i = 0; i < plane; ++i) dst[i] = v;
  }
}

void linear_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                    Tensor& y) {
  const std::size_t n = x.dim(0), fin = x.dim(1), fout = w.dim(0);
  k::gemm(false, true, n, fout, fin, 1.0f, x.data(), fin, w.data(), fin, 0.0f,
          y.data(), fout);
  for (std::size_t s = 0; s < n; ++s) k::add(b.data(), y.data() + s * fout, fout);
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                     Tensor* dx, Tensor& dw, Tensor& db) {
  const std::size_t n = x.dim(0), fin = x.dim(1), fout = w.dim(0);
  if (dx) {
    k::gemm(false, false, n, fin, fout, 1.0f, dy.data(), fout, w.data(), fin,
            0.0f, dx->data(), fin);
  }
  k::gemm(true, false, fout, fin, n, 1.0f, dy.data(), fout, x.data(), fin,
          1.0f, dw.data(), fin);
  for (std::size_t s = 0; s < n; ++s)
    k::add(dy.data() + s * fout, db.data(), fout);
}

float softmax_xent(const Tensor& logits, std::span<const int> labels,
                   Tensor& dlogits) {
  const std::size_t n = logits.dim(0), classes = logits.dim(1);
  const float inv_n = 1.0f / static_cast<float>(n);
  double loss = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const float* row = logits.data() + s * classes;
    float* drow = dlogits.data() + s * classes;
    float mx = row[0];
    for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < classes; ++j)
      z += std::exp(static_cast<double>(row[j] - mx));
    const int label = labels[s];
    loss -= static_cast<double>(row[label] - mx) - std::log(z);
    for (std::size_t j = 0; j < classes; ++j) {
      const float p =
          static_cast<float>(std::exp(static_cast<double>(row[j] - mx)) / z);
      drow[j] = (p - (static_cast<int>(j) == label ? 1.0f : 0.0f)) * inv_n;
    }
  }
  return static_cast<float>(loss / static_cast<double>(n));
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t n = logits.dim(0), classes = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t s = 0; s < n; ++s) {
    const float* row = logits.data() + s * classes;
    int best = 0;
    for (std::size_t j = 1; j < classes; ++j)
      if (row[j] > row[best]) best = static_cast<int>(j);
    out[s] = best;
  }
  return out;
}

}  // namespace mdl::ops
