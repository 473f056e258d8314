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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "mdl/kernels.hpp"
#include "mdl/rng.hpp"

using namespace mdl;
namespace k = mdl::kernels;
namespace kd = mdl::kernels::detail;

namespace {

std::vector<float> random_vec(Rng& rng, std::size_t n, float scale = 1.0f) {
  std::vector<float> v(n);
  for (auto& x : v) x = rng.normal_float(0.0f, scale);
  return v;
}

bool close(float a, float b, float rtol, float atol) {
  return std::abs(a - b) <= rtol * std::max(std::abs(a), std::abs(b)) + atol;
}

bool all_close(const std::vector<float>& a, const std::vector<float>& b,
               float rtol = 1e-6f, float atol = 1e-6f) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!close(a[i], b[i], rtol, atol)) return false;
  return true;
}

// Sizes straddling the 8-lane vector width, including remainder tails.
const std::size_t kSizes[] = {0, 1, 3, 7, 8, 9, 15, 16, 17, 63, 64, 257, 1000};

}  // namespace

TEST_CASE("scalar kernels match their definitions") {
  Rng rng(101);
  std::vector<float> x = random_vec(rng, 33);
  std::vector<float> y = random_vec(rng, 33);

  std::vector<float> expect = y;
  for (std::size_t i = 0; i < x.size(); ++i) expect[i] += 0.5f * x[i];
  std::vector<float> got = y;
  kd::axpy_scalar(0.5f, x.data(), got.data(), x.size());
  CHECK(got == expect);

  double sum = 0.0;
  for (float v : x) sum += v;
  CHECK(close(kd::reduce_sum_scalar(x.data(), x.size()),
              static_cast<float>(sum), 1e-5f, 1e-6f));

  double dotd = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) dotd += double(x[i]) * y[i];
  CHECK(close(kd::dot_scalar(x.data(), y.data(), x.size()),
              static_cast<float>(dotd), 1e-5f, 1e-6f));
}

#if defined(__x86_64__) || defined(_M_X64)

TEST_CASE("avx2 variants agree with scalar references") {
  if (!k::supported(k::Backend::kAvx2)) {
    MESSAGE("AVX2 not available; skipping equivalence checks");
    return;
  }
  Rng rng(7);
  for (std::size_t n : kSizes) {
    CAPTURE(n);
    std::vector<float> x = random_vec(rng, n);
    std::vector<float> y = random_vec(rng, n);

    SUBCASE("") {}  // keep x/y fresh per size

    {
      std::vector<float> a = y, b = y;
      kd::axpy_scalar(1.7f, x.data(), a.data(), n);
      kd::axpy_avx2(1.7f, x.data(), b.data(), n);
      CHECK(all_close(a, b));
    }
    {
      std::vector<float> a(n), b(n);
      kd::affine_scalar(x.data(), a.data(), 1.3f, -0.2f, n);
      kd::affine_avx2(x.data(), b.data(), 1.3f, -0.2f, n);
      CHECK(all_close(a, b));
    }
    {
      std::vector<float> a = y, b = y;
      kd::add_scalar(x.data(), a.data(), n);
      kd::add_avx2(x.data(), b.data(), n);
      CHECK(all_close(a, b));
    }
    {
      std::vector<float> a = x, b = x;
      kd::scale_scalar(0.77f, a.data(), n);
      kd::scale_avx2(0.77f, b.data(), n);
      CHECK(all_close(a, b));
    }
    {
      const float a = kd::dot_scalar(x.data(), y.data(), n);
      const float b = kd::dot_avx2(x.data(), y.data(), n);
      CHECK(close(a, b, 1e-5f, 1e-5f));
    }
    {
      const float a = kd::reduce_sum_scalar(x.data(), n);
      const float b = kd::reduce_sum_avx2(x.data(), n);
      CHECK(close(a, b, 1e-5f, 1e-5f));
    }
    {
      const float a = kd::reduce_sumsq_diff_scalar(x.data(), 0.37f, n);
      const float b = kd::reduce_sumsq_diff_avx2(x.data(), 0.37f, n);
      CHECK(close(a, b, 1e-5f, 1e-5f));
    }
    {
      std::vector<float> a(n), b(n);
      kd::relu_scalar(x.data(), a.data(), n);
      kd::relu_avx2(x.data(), b.data(), n);
      CHECK(a == b);  // pure comparison/select, must be bit-identical
    }
    {
      std::vector<float> fwd(n), a(n), b(n);
      kd::relu_scalar(x.data(), fwd.data(), n);
      kd::relu_grad_scalar(fwd.data(), y.data(), a.data(), n);
      kd::relu_grad_avx2(fwd.data(), y.data(), b.data(), n);
      CHECK(a == b);
    }
    {
      std::vector<float> w1 = x, w2 = x;
      std::vector<float> v1 = random_vec(rng, n, 0.1f);
      std::vector<float> v2 = v1;
      kd::sgd_update_scalar(w1.data(), y.data(), v1.data(), n, 0.1f, 0.9f,
                            1e-4f);
      kd::sgd_update_avx2(w2.data(), y.data(), v2.data(), n, 0.1f, 0.9f,
                          1e-4f);
      CHECK(all_close(w1, w2));
      CHECK(all_close(v1, v2));
    }
  }
}

#endif  // x86_64

TEST_CASE("gemm layouts match a naive triple loop") {
  Rng rng(11);
  const struct { std::size_t m, n, k; } sizes[] = {
      {1, 1, 1}, {2, 3, 4}, {5, 7, 9}, {8, 8, 8}, {13, 17, 19}, {32, 20, 40}};
  for (auto [m, n, kk] : sizes) {
    CAPTURE(m); CAPTURE(n); CAPTURE(kk);
    std::vector<float> a = random_vec(rng, m * kk);
    std::vector<float> b = random_vec(rng, kk * n);
    std::vector<float> at(kk * m), bt(n * kk);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < kk; ++p) at[p * m + i] = a[i * kk + p];
    for (std::size_t p = 0; p < kk; ++p)
      for (std::size_t j = 0; j < n; ++j) bt[j * kk + p] = b[p * n + j];

    std::vector<float> want(m * n, 0.0f);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < kk; ++p)
          acc += double(a[i * kk + p]) * b[p * n + j];
        want[i * n + j] = static_cast<float>(1.5 * acc);
      }

    std::vector<float> c(m * n, 0.0f);
    k::gemm(false, false, m, n, kk, 1.5f, a.data(), kk, b.data(), n, 0.0f,
            c.data(), n);
    CHECK(all_close(c, want, 1e-5f, 1e-5f));

    std::fill(c.begin(), c.end(), 0.0f);
    k::gemm(false, true, m, n, kk, 1.5f, a.data(), kk, bt.data(), kk, 0.0f,
            c.data(), n);
    CHECK(all_close(c, want, 1e-5f, 1e-5f));

    std::fill(c.begin(), c.end(), 0.0f);
    k::gemm(true, false, m, n, kk, 1.5f, at.data(), m, b.data(), n, 0.0f,
            c.data(), n);
    CHECK(all_close(c, want, 1e-5f, 1e-5f));

    // beta == 1 accumulates.
    std::vector<float> base = random_vec(rng, m * n);
    std::vector<float> acc = base;
    k::gemm(false, false, m, n, kk, 1.5f, a.data(), kk, b.data(), n, 1.0f,
            acc.data(), n);
    std::vector<float> want_acc(m * n);
    for (std::size_t i = 0; i < m * n; ++i) want_acc[i] = base[i] + want[i];
    CHECK(all_close(acc, want_acc, 1e-5f, 1e-5f));
  }
}

TEST_CASE("backend dispatch reports and forces backends") {
  CHECK(k::supported(k::Backend::kScalar));
  const k::Backend original = k::active();
  k::force(k::Backend::kScalar);
  CHECK(k::active() == k::Backend::kScalar);
  CHECK(k::active_backend_name() == "scalar");
  if (k::supported(k::Backend::kAvx2)) {
    k::force(k::Backend::kAvx2);
    CHECK(k::active_backend_name() == "avx2");
  }
  k::force(original);
}
