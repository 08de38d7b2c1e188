// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#include "densecl/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <mutex>

#include "densecl/common.hpp"
#include "kernels/ops_table.hpp"

namespace densecl::kernels {

namespace {

std::atomic<const OpsTable*> g_ops{nullptr};
std::atomic<Lane> g_lane{Lane::scalar};
std::once_flag g_init_flag;

bool cpu_has(Lane lane) {
  switch (lane) {
    case Lane::scalar:
      return true;
    case Lane::avx2:
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Lane::avx512:
      return __builtin_cpu_supports("avx512f");
  }
  return false;
}

const OpsTable* table_for(Lane lane) {
  switch (lane) {
    case Lane::scalar: return &scalar_table();
    case Lane::avx2: return &avx2_table();
    case Lane::avx512: return &avx512_table();
  }
  return &scalar_table();
}

void init_from_env() {
  Lane lane = Lane::scalar;
  const char* env = std::getenv("DCL_KERNELS");
  if (env && std::strcmp(env, "auto") != 0 && *env) {
    if (!std::strcmp(env, "scalar")) lane = Lane::scalar;
    else if (!std::strcmp(env, "avx2")) lane = Lane::avx2;
    else if (!std::strcmp(env, "avx512")) lane = Lane::avx512;
    else throw ConfigError(std::string("DCL_KERNELS: unknown lane '") + env +
                           "' (expected auto|scalar|avx2|avx512)");
    if (!cpu_has(lane))
      throw ConfigError(std::string("DCL_KERNELS: lane '") + env +
                        "' not supported by this CPU");
  } else {
    if (cpu_has(Lane::avx512)) lane = Lane::avx512;
    else if (cpu_has(Lane::avx2)) lane = Lane::avx2;
  }
  g_lane.store(lane, std::memory_order_relaxed);
  g_ops.store(table_for(lane), std::memory_order_release);
}

inline const OpsTable& ops() {
  const OpsTable* t = g_ops.load(std::memory_order_acquire);
  if (t) return *t;
  std::call_once(g_init_flag, init_from_env);
  return *g_ops.load(std::memory_order_acquire);
}

}  // namespace

const char* lane_name(Lane lane) {
  switch (lane) {
    case Lane::scalar: return "scalar";
    case Lane::avx2: return "avx2";
    case Lane::avx512: return "avx512";
  }
  return "?";
}

bool lane_supported(Lane lane) { return cpu_has(lane); }

Lane active_lane() {
  ops();
  return g_lane.load(std::memory_order_relaxed);
}

void set_lane(Lane lane) {
  if (!cpu_has(lane))
    throw ConfigError(std::string("kernel lane '") + lane_name(lane) +
                      "' not supported by this CPU");
  ops();  // make sure init happened so set wins over env
  g_lane.store(lane, std::memory_order_relaxed);
  g_ops.store(table_for(lane), std::memory_order_release);
}

void gemm_nn(int64_t M, int64_t N, int64_t K, const float* A, const float* B, float* C,
             bool acc) {
  ops().gemm_nn(M, N, K, A, B, C, acc);
}
void gemm_nt(int64_t M, int64_t N, int64_t K, const float* A, const float* B, float* C,
             bool acc) {
  ops().gemm_nt(M, N, K, A, B, C, acc);
}
void gemm_tn(int64_t M, int64_t N, int64_t K, const float* A, const float* B, float* C,
             bool acc) {
  ops().gemm_tn(M, N, K, A, B, C, acc);
}
float dot(const float* a, const float* b, int64_t n) { return ops().dot(a, b, n); }
float sum(const float* x, int64_t n) { return ops().sum(x, n); }
float sumsq(const float* x, int64_t n) { return ops().sumsq(x, n); }
void axpy(int64_t n, float a, const float* x, float* y) { ops().axpy(n, a, x, y); }
void scale(int64_t n, float a, float* x) { ops().scale(n, a, x); }
void relu_fwd(int64_t n, const float* x, float* y) { ops().relu_fwd(n, x, y); }
void relu_bwd(int64_t n, const float* y, const float* dy, float* dx) {
  ops().relu_bwd(n, y, dy, dx);
}
void sgd_step(int64_t n, float* p, const float* g, float* buf, float lr, float mu,
              float wd) {
  ops().sgd_step(n, p, g, buf, lr, mu, wd);
}
void ema(int64_t n, float* k, const float* q, float m) { ops().ema(n, k, q, m); }
void scale_shift(int64_t n, float a, float b, const float* x, float* y) {
  ops().scale_shift(n, a, b, x, y);
}
void triad(int64_t n, float a, float b, float c, const float* x, const float* y,
           float* out) {
  ops().triad(n, a, b, c, x, y, out);
}

}  // namespace densecl::kernels
