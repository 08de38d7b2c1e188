// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <string>

namespace densecl::kernels {

// Float kernels come in equivalence-tested lanes selected at runtime:
// a scalar reference lane (always available, also the double-precision
// implementation used by test oracles) and wider SIMD lanes picked by CPU
// probe. DCL_KERNELS=scalar|avx2|avx512 forces a lane; "auto" (default)
// picks the widest supported one.
enum class Lane {
  scalar = 0,
  avx2 = 1,
  avx512 = 2,
};

const char* lane_name(Lane lane);
bool lane_supported(Lane lane);

/// Currently active float lane (resolved on first use).
Lane active_lane();

/// Forces a lane; throws ConfigError if unsupported on this CPU.
void set_lane(Lane lane);

// ---- float kernels (dispatched) ----
// Matrices are tight row-major (leading dimension == column count).
// accumulate=false overwrites C, accumulate=true adds into it.

/// C[MxN] = A[MxK] * B[KxN]
void gemm_nn(int64_t M, int64_t N, int64_t K, const float* A, const float* B, float* C,
             bool accumulate);
/// C[MxN] = A[MxK] * B[NxK]^T
void gemm_nt(int64_t M, int64_t N, int64_t K, const float* A, const float* B, float* C,
             bool accumulate);
/// C[MxN] = A[KxM]^T * B[KxN]
void gemm_tn(int64_t M, int64_t N, int64_t K, const float* A, const float* B, float* C,
             bool accumulate);

float dot(const float* a, const float* b, int64_t n);
float sum(const float* x, int64_t n);
float sumsq(const float* x, int64_t n);
/// y += a * x
void axpy(int64_t n, float a, const float* x, float* y);
/// x *= a
void scale(int64_t n, float a, float* x);
void relu_fwd(int64_t n, const float* x, float* y);
/// dx = dy where y > 0, else 0
void relu_bwd(int64_t n, const float* y, const float* dy, float* dx);
/// g += wd*p; buf = mu*buf + g; p -= lr*buf  (g is consumed scratch)
void sgd_step(int64_t n, float* p, const float* g, float* buf, float lr, float mu, float wd);
/// k = m*k + (1-m)*q
void ema(int64_t n, float* k, const float* q, float m);
/// y = a*x + b
void scale_shift(int64_t n, float a, float b, const float* x, float* y);
/// out = a*x + b*y + c
void triad(int64_t n, float a, float b, float c, const float* x, const float* y, float* out);

// ---- double kernels (always the scalar reference path) ----
void gemm_nn(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C,
             bool accumulate);
void gemm_nt(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C,
             bool accumulate);
void gemm_tn(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C,
             bool accumulate);
double dot(const double* a, const double* b, int64_t n);
double sum(const double* x, int64_t n);
double sumsq(const double* x, int64_t n);
void axpy(int64_t n, double a, const double* x, double* y);
void scale(int64_t n, double a, double* x);
void relu_fwd(int64_t n, const double* x, double* y);
void relu_bwd(int64_t n, const double* y, const double* dy, double* dx);
void sgd_step(int64_t n, double* p, const double* g, double* buf, double lr, double mu,
              double wd);
void ema(int64_t n, double* k, const double* q, double m);
void scale_shift(int64_t n, double a, double b, const double* x, double* y);
void triad(int64_t n, double a, double b, double c, const double* x, const double* y,
           double* out);

}  // namespace densecl::kernels
