// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "densecl/kernels.hpp"
#include "densecl/rng.hpp"
#include "oracles.hpp"

using namespace densecl;
namespace k = densecl::kernels;

namespace {

std::vector<k::Lane> simd_lanes() {
  std::vector<k::Lane> lanes;
  if (k::lane_supported(k::Lane::avx2)) lanes.push_back(k::Lane::avx2);
  if (k::lane_supported(k::Lane::avx512)) lanes.push_back(k::Lane::avx512);
  return lanes;
}

std::vector<float> random_vec(Rng& rng, int64_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<float> v(static_cast<size_t>(n));
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

double rel_close(const std::vector<float>& a, const std::vector<float>& b) {
  double md = 0, scale = 1e-30;
  for (size_t i = 0; i < a.size(); ++i) {
    md = std::max(md, std::fabs(static_cast<double>(a[i]) - b[i]));
    scale = std::max(scale, std::fabs(static_cast<double>(a[i])));
  }
  return md / scale;
}

struct LaneGuard {
  ~LaneGuard() { k::set_lane(k::Lane::scalar); }
};

}  // namespace

TEST_CASE("scalar gemm matches the double triple-loop oracle") {
  Rng rng(11);
  k::set_lane(k::Lane::scalar);
  for (int rep = 0; rep < 20; ++rep) {
    int64_t m = 1 + static_cast<int64_t>(rng.below(20));
    int64_t n = 1 + static_cast<int64_t>(rng.below(20));
    int64_t kk = 1 + static_cast<int64_t>(rng.below(20));
    auto a = random_vec(rng, m * kk);
    auto b = random_vec(rng, kk * n);
    std::vector<double> ad(a.begin(), a.end()), bd(b.begin(), b.end());
    auto want = oracles::naive_gemm(m, n, kk, ad, bd);

    std::vector<float> c(static_cast<size_t>(m * n));
    k::gemm_nn(m, n, kk, a.data(), b.data(), c.data(), false);
    for (size_t i = 0; i < c.size(); ++i)
      CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-4));

    // accumulate mode adds on top
    auto c2 = c;
    k::gemm_nn(m, n, kk, a.data(), b.data(), c2.data(), true);
    for (size_t i = 0; i < c.size(); ++i)
      CHECK(c2[i] == doctest::Approx(2.0 * want[i]).epsilon(1e-4));
  }
}

TEST_CASE("gemm variants agree on transposed layouts") {
  Rng rng(12);
  k::set_lane(k::Lane::scalar);
  int64_t m = 7, n = 13, kk = 9;
  auto a = random_vec(rng, m * kk);
  auto b = random_vec(rng, kk * n);
  std::vector<float> at(static_cast<size_t>(kk * m)), bt(static_cast<size_t>(n * kk));
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < kk; ++j) at[j * m + i] = a[i * kk + j];
  for (int64_t i = 0; i < kk; ++i)
    for (int64_t j = 0; j < n; ++j) bt[j * kk + i] = b[i * n + j];

  std::vector<float> c0(static_cast<size_t>(m * n)), c1 = c0, c2 = c0;
  k::gemm_nn(m, n, kk, a.data(), b.data(), c0.data(), false);
  k::gemm_nt(m, n, kk, a.data(), bt.data(), c1.data(), false);
  k::gemm_tn(m, n, kk, at.data(), b.data(), c2.data(), false);
  CHECK(rel_close(c0, c1) < 1e-6);
  CHECK(rel_close(c0, c2) < 1e-6);
}

TEST_CASE("SIMD lanes are equivalent to the scalar reference") {
  LaneGuard guard;
  Rng rng(13);
  for (auto lane : simd_lanes()) {
    CAPTURE(k::lane_name(lane));
    for (auto [m, n, kk] : std::vector<std::array<int64_t, 3>>{
             {1, 1, 1}, {6, 16, 8}, {7, 17, 31}, {64, 50, 129}, {130, 257, 300}}) {
      auto a = random_vec(rng, m * kk);
      auto b = random_vec(rng, kk * n);
      std::vector<float> bt(static_cast<size_t>(n * kk)), at(static_cast<size_t>(kk * m));
      for (int64_t i = 0; i < kk; ++i)
        for (int64_t j = 0; j < n; ++j) bt[j * kk + i] = b[i * n + j];
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < kk; ++j) at[j * m + i] = a[i * kk + j];

      std::vector<float> ref_nn(static_cast<size_t>(m * n)), ref_nt = ref_nn, ref_tn = ref_nn;
      k::set_lane(k::Lane::scalar);
      k::gemm_nn(m, n, kk, a.data(), b.data(), ref_nn.data(), false);
      k::gemm_nt(m, n, kk, a.data(), bt.data(), ref_nt.data(), false);
      k::gemm_tn(m, n, kk, at.data(), b.data(), ref_tn.data(), false);

      std::vector<float> got(static_cast<size_t>(m * n));
      k::set_lane(lane);
      k::gemm_nn(m, n, kk, a.data(), b.data(), got.data(), false);
      CHECK(rel_close(ref_nn, got) < 1e-5);
      k::gemm_nt(m, n, kk, a.data(), bt.data(), got.data(), false);
      CHECK(rel_close(ref_nt, got) < 1e-5);
      k::gemm_tn(m, n, kk, at.data(), b.data(), got.data(), false);
      CHECK(rel_close(ref_tn, got) < 1e-5);
    }
  }
}

TEST_CASE("SIMD vector ops are equivalent to scalar across sizes with tails") {
  LaneGuard guard;
  Rng rng(14);
  for (auto lane : simd_lanes()) {
    CAPTURE(k::lane_name(lane));
    for (int64_t n : {1, 7, 8, 9, 31, 32, 33, 1000, 1021}) {
      auto x = random_vec(rng, n);
      auto y = random_vec(rng, n);

      k::set_lane(k::Lane::scalar);
      double dot_ref = k::dot(x.data(), y.data(), n);
      double sum_ref = k::sum(x.data(), n);
      double ssq_ref = k::sumsq(x.data(), n);
      auto axpy_ref = y;
      k::axpy(n, 0.37f, x.data(), axpy_ref.data());
      auto relu_ref = x;
      k::relu_fwd(n, x.data(), relu_ref.data());
      auto rbwd_ref = x;
      k::relu_bwd(n, relu_ref.data(), y.data(), rbwd_ref.data());
      auto p_ref = x;
      auto buf_ref = y;
      k::sgd_step(n, p_ref.data(), y.data(), buf_ref.data(), 0.1f, 0.9f, 1e-4f);
      auto ema_ref = x;
      k::ema(n, ema_ref.data(), y.data(), 0.999f);

      k::set_lane(lane);
      CHECK(k::dot(x.data(), y.data(), n) == doctest::Approx(dot_ref).epsilon(1e-4));
      CHECK(k::sum(x.data(), n) == doctest::Approx(sum_ref).epsilon(1e-4));
      CHECK(k::sumsq(x.data(), n) == doctest::Approx(ssq_ref).epsilon(1e-4));
      auto axpy_got = y;
      k::axpy(n, 0.37f, x.data(), axpy_got.data());
      CHECK(rel_close(axpy_ref, axpy_got) < 1e-5);
      auto relu_got = x;
      k::relu_fwd(n, x.data(), relu_got.data());
      CHECK(relu_ref == relu_got);  // exact: max() has no rounding
      auto rbwd_got = x;
      k::relu_bwd(n, relu_got.data(), y.data(), rbwd_got.data());
      CHECK(rbwd_ref == rbwd_got);
      auto p_got = x;
      auto buf_got = y;
      k::sgd_step(n, p_got.data(), y.data(), buf_got.data(), 0.1f, 0.9f, 1e-4f);
      CHECK(rel_close(p_ref, p_got) < 1e-5);
      CHECK(rel_close(buf_ref, buf_got) < 1e-5);
      auto ema_got = x;
      k::ema(n, ema_got.data(), y.data(), 0.999f);
      CHECK(rel_close(ema_ref, ema_got) < 1e-5);

      k::set_lane(k::Lane::scalar);
      std::vector<float> ss_ref(static_cast<size_t>(n)), tri_ref(static_cast<size_t>(n));
      k::scale_shift(n, 1.7f, -0.3f, x.data(), ss_ref.data());
      k::triad(n, 0.8f, -1.2f, 0.05f, x.data(), y.data(), tri_ref.data());
      k::set_lane(lane);
      std::vector<float> ss_got(static_cast<size_t>(n)), tri_got(static_cast<size_t>(n));
      k::scale_shift(n, 1.7f, -0.3f, x.data(), ss_got.data());
      k::triad(n, 0.8f, -1.2f, 0.05f, x.data(), y.data(), tri_got.data());
      CHECK(rel_close(ss_ref, ss_got) < 1e-5);
      CHECK(rel_close(tri_ref, tri_got) < 1e-5);
    }
  }
}

TEST_CASE("relu semantics") {
  k::set_lane(k::Lane::scalar);
  std::vector<float> x{-1.0f, 0.0f, 2.5f}, y(3), dx(3);
  std::vector<float> dy{1.0f, 1.0f, 1.0f};
  k::relu_fwd(3, x.data(), y.data());
  CHECK(y == std::vector<float>{0.0f, 0.0f, 2.5f});
  k::relu_bwd(3, y.data(), dy.data(), dx.data());
  CHECK(dx == std::vector<float>{0.0f, 0.0f, 1.0f});
}

TEST_CASE("sgd_step matches the update recurrence") {
  k::set_lane(k::Lane::scalar);
  // p=1, grad=1, buf=0, mu=0.9, wd=1e-4, lr=0.1 -> g=1.0001, buf=1.0001, p=0.89999
  float p = 1.0f, g = 1.0f, buf = 0.0f;
  k::sgd_step(1, &p, &g, &buf, 0.1f, 0.9f, 1e-4f);
  CHECK(buf == doctest::Approx(1.0001).epsilon(1e-6));
  CHECK(p == doctest::Approx(0.89999).epsilon(1e-6));
}

TEST_CASE("ema endpoints") {
  k::set_lane(k::Lane::scalar);
  float kv = 3.0f, q = 7.0f;
  k::ema(1, &kv, &q, 1.0f);
  CHECK(kv == 3.0f);
  k::ema(1, &kv, &q, 0.0f);
  CHECK(kv == 7.0f);
}
