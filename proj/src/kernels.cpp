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

// Backend dispatch and the gemm driver built on the vector primitives.

#include "mdl/kernels.hpp"

#include <cassert>
#include <cstdlib>
#include <cstring>

#include "mdl/common.hpp"

namespace mdl::kernels {

namespace {

struct KernelTable {
  void (*axpy)(float, const float*, float*, std::size_t);
  void (*affine)(const float*, float*, float, float, std::size_t);
  void (*add)(const float*, float*, std::size_t);
  void (*scale)(float, float*, std::size_t);
  float (*dot)(const float*, const float*, std::size_t);
  float (*reduce_sum)(const float*, std::size_t);
  float (*reduce_sumsq_diff)(const float*, float, std::size_t);
  void (*relu)(const float*, float*, std::size_t);
  void (*relu_grad)(const float*, const float*, float*, std::size_t);
  void (*sgd_update)(float*, const float*, float*, std::size_t, float, float,
                     float);
};

constexpr KernelTable kScalarTable = {
    detail::axpy_scalar,        detail::affine_scalar,
    detail::add_scalar,         detail::scale_scalar,
    detail::dot_scalar,         detail::reduce_sum_scalar,
    detail::reduce_sumsq_diff_scalar,
    detail::relu_scalar,        detail::relu_grad_scalar,
    detail::sgd_update_scalar,
};

#if defined(__x86_64__) || defined(_M_X64)
constexpr KernelTable kAvx2Table = {
    detail::axpy_avx2,        detail::affine_avx2,
    detail::add_avx2,         detail::scale_avx2,
    detail::dot_avx2,         detail::reduce_sum_avx2,
    detail::reduce_sumsq_diff_avx2,
    detail::relu_avx2,        detail::relu_grad_avx2,
    detail::sgd_update_avx2,
};
#endif

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend pick_default() {
  if (const char* env = std::getenv("MDSHARE_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::kScalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!cpu_has_avx2())
        throw Error("MDSHARE_KERNELS=avx2 but this CPU lacks AVX2/FMA");
      return Backend::kAvx2;
    }
    throw Error(std::string("unknown MDSHARE_KERNELS value: ") + env);
  }
  return cpu_has_avx2() ? Backend::kAvx2 : Backend::kScalar;
}

struct State {
  Backend backend;
  const KernelTable* table;
};

State& state() {
  static State s = [] {
    Backend b = pick_default();
#if defined(__x86_64__) || defined(_M_X64)
    return State{b, b == Backend::kAvx2 ? &kAvx2Table : &kScalarTable};
#else
    return State{b, &kScalarTable};
#endif
  }();
  return s;
}

}  // namespace

Backend active() { return state().backend; }

bool supported(Backend b) {
  return b == Backend::kScalar || (b == Backend::kAvx2 && cpu_has_avx2());
}

void force(Backend b) {
  if (!supported(b))
    throw Error("kernel backend '" + backend_name(b) +
                "' is not supported on this CPU");
#if defined(__x86_64__) || defined(_M_X64)
  state() = State{b, b == Backend::kAvx2 ? &kAvx2Table : &kScalarTable};
#else
  state() = State{b, &kScalarTable};
#endif
}

std::string backend_name(Backend b) {
  return b == Backend::kAvx2 ? "avx2" : "scalar";
}

std::string active_backend_name() { return backend_name(active()); }

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  state().table->axpy(alpha, x, y, n);
}
void affine(const float* x, float* y, float scale_, float shift,
            std::size_t n) {
  state().table->affine(x, y, scale_, shift, n);
}
void add(const float* x, float* y, std::size_t n) {
  state().table->add(x, y, n);
}
void scale(float alpha, float* x, std::size_t n) {
  state().table->scale(alpha, x, n);
}
float dot(const float* a, const float* b, std::size_t n) {
  return state().table->dot(a, b, n);
}
float reduce_sum(const float* x, std::size_t n) {
  return state().table->reduce_sum(x, n);
}
float reduce_sumsq_diff(const float* x, float mean, std::size_t n) {
  return state().table->reduce_sumsq_diff(x, mean, n);
}
void relu(const float* x, float* y, std::size_t n) {
  state().table->relu(x, y, n);
}
void relu_grad(const float* y, const float* dy, float* dx, std::size_t n) {
  state().table->relu_grad(y, dy, dx, n);
}
void sgd_update(float* w, const float* g, float* v, std::size_t n, float lr,
                float momentum, float weight_decay) {
  state().table->sgd_update(w, g, v, n, lr, momentum, weight_decay);
}

// The three layouts used by conv and the classifier:
//   nn: C = A * B        (conv forward, linear input-grad)
//   nt: C = A * B^T      (linear forward, conv weight-grad)
//   tn: C = A^T * B      (conv input-grad, linear weight-grad)
// nn/tn are axpy row sweeps, nt is a dot per output element.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, float alpha, const float* a, std::size_t lda,
          const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc) {
  assert(!(trans_a && trans_b) && "gemm: tt layout not supported");
  assert((beta == 0.0f || beta == 1.0f) && "gemm: beta must be 0 or 1");
  if (beta == 0.0f) {
    for (std::size_t i = 0; i < m; ++i)
      std::memset(c + i * ldc, 0, n * sizeof(float));
  }
  if (m == 0 || n == 0 || k == 0) return;

  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      const float* a_row = a + i * lda;
      float* c_row = c + i * ldc;
      for (std::size_t p = 0; p < k; ++p) {
        axpy(alpha * a_row[p], b + p * ldb, c_row, n);
      }
    }
  } else if (!trans_a && trans_b) {
    // B stored [n x k]; C[i,j] += alpha * dot(A row i, B row j).
    for (std::size_t i = 0; i < m; ++i) {
      const float* a_row = a + i * lda;
      float* c_row = c + i * ldc;
      for (std::size_t j = 0; j < n; ++j) {
        c_row[j] += alpha * dot(a_row, b + j * ldb, k);
      }
    }
  } else {
    // A stored [k x m]; sweep rows of B scaled by the A column entries.
    for (std::size_t p = 0; p < k; ++p) {
      const float* a_row = a + p * lda;
      const float* b_row = b + p * ldb;
      for (std::size_t i = 0; i < m; ++i) {
        axpy(alpha * a_row[i], b_row, c + i * ldc, n);
      }
    }
  }
}

}  // namespace mdl::kernels
