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

// Test-only reference network: a plain single-domain forward written as
// direct loops, with no im2col, no gemm and no dispatch. Building one by
// splicing a domain's specific filters into a copy of the shared weights is
// the merged-network oracle for the multi-domain forward. Accumulation
// follows the same mathematical order as the library's scalar kernels so
// agreement is tight.

#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "mdl/archspec.hpp"
#include "mdl/model.hpp"
#include "mdl/tensor.hpp"

namespace mdltest {

namespace as = mdl::archspec;
using mdl::Tensor;

struct NaiveBn {
  Tensor gamma, beta, mean, var;
};

struct NaiveNet {
  as::ArchitectureSpec arch;
  std::vector<Tensor> w;  // [out, in/g, kh, kw] per layer
  std::vector<Tensor> b;  // empty when the layer has no bias
  std::map<int, NaiveBn> bn;
  Tensor head_w, head_b;
};

// Merged network for one domain: shared weights with the plan's selected
// rows overwritten by the domain's own filters, plus that domain's BN state
// and classifier.
inline NaiveNet merge_for_domain(const mdl::mdnet::MultiDomainModel& model,
                                 const std::string& domain_id) {
  NaiveNet net;
  net.arch = model.arch();
  const auto& overlay = model.overlay(domain_id);
  for (const auto& l : net.arch.layers) {
    Tensor w = model.shared()[l.layer_id].w;
    Tensor b = model.shared()[l.layer_id].b;
    if (const auto* sel = model.plan().selected_in(l.layer_id)) {
      const auto& spec = overlay.specific.at(l.layer_id);
      const std::size_t row =
          static_cast<std::size_t>(l.in_channels / l.groups) * l.kernel_h *
          l.kernel_w;
      for (std::size_t pos = 0; pos < sel->size(); ++pos) {
        for (std::size_t i = 0; i < row; ++i)
          w[(*sel)[pos] * row + i] = spec.w[pos * row + i];
        if (!b.empty()) b[(*sel)[pos]] = spec.b[pos];
      }
    }
    net.w.push_back(std::move(w));
    net.b.push_back(std::move(b));
  }
  for (const auto& [layer_id, bn] : overlay.bn)
    net.bn[layer_id] = {bn.gamma, bn.beta, bn.running_mean, bn.running_var};
  net.head_w = overlay.head.w;
  net.head_b = overlay.head.b;
  return net;
}

// Plain direct convolution; channels accumulate in (c, ki, kj) order.
inline Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& bias,
                         const as::ConvLayerSpec& l, int in_h, int in_w) {
  const std::size_t n = x.dim(0);
  const int oh = as::conv_out_extent(in_h, l.kernel_h, l.stride, l.padding);
  const int ow = as::conv_out_extent(in_w, l.kernel_w, l.stride, l.padding);
  const int cg = l.in_channels / l.groups;
  const int out_per_group = l.out_channels / l.groups;
  Tensor y({n, static_cast<std::size_t>(l.out_channels),
            static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  for (std::size_t s = 0; s < n; ++s) {
    for (int oc = 0; oc < l.out_channels; ++oc) {
      const int group = oc / out_per_group;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          float acc = 0.0f;
          for (int c = 0; c < cg; ++c) {
            const int ic = group * cg + c;
            for (int ki = 0; ki < l.kernel_h; ++ki) {
              const int iy = oy * l.stride - l.padding + ki;
              for (int kj = 0; kj < l.kernel_w; ++kj) {
                const int ix = ox * l.stride - l.padding + kj;
                const float xv =
                    (iy >= 0 && iy < in_h && ix >= 0 && ix < in_w)
                        ? x[((s * l.in_channels + ic) * in_h + iy) * in_w + ix]
                        : 0.0f;
                acc += w[((static_cast<std::size_t>(oc) * cg + c) * l.kernel_h +
                          ki) * l.kernel_w + kj] * xv;
              }
            }
          }
          if (!bias.empty()) acc += bias[oc];
          y[((s * l.out_channels + oc) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
  return y;
}

inline void naive_bn_apply(Tensor& t, const Tensor& gamma, const Tensor& beta,
                           const Tensor& mean, const Tensor& var, float eps) {
  const std::size_t n = t.dim(0), c = t.dim(1);
  const std::size_t plane = t.numel() / (n * c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float invstd = 1.0f / std::sqrt(var[ch] + eps);
    const float scale = gamma[ch] * invstd;
    const float shift = beta[ch] - scale * mean[ch];
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t p = 0; p < plane; ++p) {
        float& v = t[(s * c + ch) * plane + p];
        v = scale * v + shift;
      }
  }
}

// Biased batch statistics, per-sample float partial sums accumulated in
// double, matching the library's reduction structure.
inline void naive_batch_stats(const Tensor& t, Tensor& mean, Tensor& var) {
  const std::size_t n = t.dim(0), c = t.dim(1);
  const std::size_t plane = t.numel() / (n * c);
  const double m = static_cast<double>(n * plane);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      float partial = 0.0f;
      for (std::size_t p = 0; p < plane; ++p)
        partial += t[(s * c + ch) * plane + p];
      sum += partial;
    }
    mean[ch] = static_cast<float>(sum / m);
    double sq = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      float partial = 0.0f;
      for (std::size_t p = 0; p < plane; ++p) {
        const float d = t[(s * c + ch) * plane + p] - mean[ch];
        partial += d * d;
      }
      sq += partial;
    }
    var[ch] = static_cast<float>(sq / m);
  }
}

// Forward pass. With use_batch_stats the BN sites normalize with the
// batch's own statistics (training semantics); otherwise with the stored
// running statistics (evaluation semantics).
inline Tensor naive_forward(const NaiveNet& net, const Tensor& x,
                            bool use_batch_stats = false) {
  const float eps = mdl::mdnet::MultiDomainModel::kBnEps;
  const std::size_t n = x.dim(0);
  std::vector<Tensor> block_out;
  Tensor cur = x;
  int h = net.arch.input.height, w_ext = net.arch.input.width;

  for (const auto& l : net.arch.layers) {
    Tensor t = naive_conv(cur, net.w[l.layer_id], net.b[l.layer_id], l, h,
                          w_ext);
    h = as::conv_out_extent(h, l.kernel_h, l.stride, l.padding);
    w_ext = as::conv_out_extent(w_ext, l.kernel_w, l.stride, l.padding);

    if (auto it = net.bn.find(l.layer_id); it != net.bn.end()) {
      if (use_batch_stats) {
        Tensor mean({t.dim(1)}), var({t.dim(1)});
        naive_batch_stats(t, mean, var);
        naive_bn_apply(t, it->second.gamma, it->second.beta, mean, var, eps);
      } else {
        naive_bn_apply(t, it->second.gamma, it->second.beta, it->second.mean,
                       it->second.var, eps);
      }
    }
    if (l.residual_from) {
      const Tensor& src = block_out[*l.residual_from];
      for (std::size_t i = 0; i < t.numel(); ++i) t[i] += src[i];
    }
    if (l.activation == "relu") {
      for (auto& v : t.flat()) v = v > 0.0f ? v : 0.0f;
    }
    if (l.post_pool == "avg2") {
      const std::size_t c = t.dim(1), th = t.dim(2), tw = t.dim(3);
      Tensor pooled({n, c, th / 2, tw / 2});
      for (std::size_t s = 0; s < n * c; ++s) {
        const float* src = t.data() + s * th * tw;
        float* dst = pooled.data() + s * (th / 2) * (tw / 2);
        for (std::size_t i = 0; i < th / 2; ++i)
          for (std::size_t j = 0; j < tw / 2; ++j)
            dst[i * (tw / 2) + j] =
                0.25f * (src[(2 * i) * tw + 2 * j] +
                         src[(2 * i) * tw + 2 * j + 1] +
                         src[(2 * i + 1) * tw + 2 * j] +
                         src[(2 * i + 1) * tw + 2 * j + 1]);
      }
      t = std::move(pooled);
      h /= 2;
      w_ext /= 2;
    }
    block_out.push_back(std::move(t));
    cur = block_out.back();
  }

  const std::size_t feat = cur.dim(1);
  const std::size_t plane = cur.dim(2) * cur.dim(3);
  Tensor pooled({n, feat});
  const float inv = 1.0f / static_cast<float>(plane);
  for (std::size_t s = 0; s < n * feat; ++s) {
    float sum = 0.0f;
    for (std::size_t p = 0; p < plane; ++p) sum += cur[s * plane + p];
    pooled[s] = inv * sum;
  }

  const std::size_t classes = net.head_w.dim(0);
  Tensor logits({n, classes});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t k = 0; k < classes; ++k) {
      float acc = 0.0f;
      for (std::size_t f = 0; f < feat; ++f)
        acc += pooled[s * feat + f] * net.head_w[k * feat + f];
      logits[s * classes + k] = acc + net.head_b[k];
    }
  }
  return logits;
}

}  // namespace mdltest
