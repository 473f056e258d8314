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

#include <cstddef>
#include <string>

// Vector kernels behind all arithmetic inner loops: convolution and the
// classifier route through gemm(), batch norm through the reductions and
// affine(), the optimizer through sgd_update(). Each primitive has a scalar
// reference implementation and an AVX2 variant; the active backend is picked
// once at startup (CPU probe, overridable via MDSHARE_KERNELS=scalar|avx2)
// and the two are equivalence-tested against each other.

namespace mdl::kernels {

enum class Backend { kScalar, kAvx2 };

Backend active();
bool supported(Backend b);
void force(Backend b);  // throws Error if unsupported on this CPU
std::string backend_name(Backend b);
std::string active_backend_name();

// y += alpha * x
void axpy(float alpha, const float* x, float* y, std::size_t n);
// y = scale * x + shift
void affine(const float* x, float* y, float scale, float shift, std::size_t n);
// y += x
void add(const float* x, float* y, std::size_t n);
// x *= alpha
void scale(float alpha, float* x, std::size_t n);
float dot(const float* a, const float* b, std::size_t n);
float reduce_sum(const float* x, std::size_t n);
// sum of (x[i] - mean)^2
float reduce_sumsq_diff(const float* x, float mean, std::size_t n);
void relu(const float* x, float* y, std::size_t n);
// dx = dy where the forward output y was positive, else 0
void relu_grad(const float* y, const float* dy, float* dx, std::size_t n);
// v = momentum * v + g + weight_decay * w;  w -= lr * v
void sgd_update(float* w, const float* g, float* v, std::size_t n, float lr,
                float momentum, float weight_decay);

// Row-major C[m x n] = alpha * op(A) * op(B) + beta * C with beta in {0, 1}.
// trans_a && trans_b is not supported (never needed here).
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, float alpha, const float* a, std::size_t lda,
          const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc);

// Both implementations are exported so tests can compare them directly,
// bypassing dispatch.
namespace detail {

void axpy_scalar(float alpha, const float* x, float* y, std::size_t n);
void affine_scalar(const float* x, float* y, float scale, float shift,
                   std::size_t n);
void add_scalar(const float* x, float* y, std::size_t n);
void scale_scalar(float alpha, float* x, std::size_t n);
float dot_scalar(const float* a, const float* b, std::size_t n);
float reduce_sum_scalar(const float* x, std::size_t n);
float reduce_sumsq_diff_scalar(const float* x, float mean, std::size_t n);
void relu_scalar(const float* x, float* y, std::size_t n);
void relu_grad_scalar(const float* y, const float* dy, float* dx,
                      std::size_t n);
void sgd_update_scalar(float* w, const float* g, float* v, std::size_t n,
                       float lr, float momentum, float weight_decay);

#if defined(__x86_64__) || defined(_M_X64)
void axpy_avx2(float alpha, const float* x, float* y, std::size_t n);
void affine_avx2(const float* x, float* y, float scale, float shift,
                 std::size_t n);
void add_avx2(const float* x, float* y, std::size_t n);
void scale_avx2(float alpha, float* x, std::size_t n);
float dot_avx2(const float* a, const float* b, std::size_t n);
float reduce_sum_avx2(const float* x, std::size_t n);
float reduce_sumsq_diff_avx2(const float* x, float mean, std::size_t n);
void relu_avx2(const float* x, float* y, std::size_t n);
void relu_grad_avx2(const float* y, const float* dy, float* dx, std::size_t n);
void sgd_update_avx2(float* w, const float* g, float* v, std::size_t n,
                     float lr, float momentum, float weight_decay);
#endif

}  // namespace detail

}  // namespace mdl::kernels
