// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

// Scalar reference kernels. These are the ground truth the SIMD lanes are
// equivalence-tested against, and the only implementation used for double.

#pragma once

#include <cstdint>

namespace densecl::kernels::ref {

template <typename T>
void gemm_nn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  for (int64_t i = 0; i < M; ++i) {
    T* c = C + i * N;
    if (!accumulate) {
      for (int64_t j = 0; j < N; ++j) c[j] = T(0);
    }
    for (int64_t k = 0; k < K; ++k) {
      T a = A[i * K + k];
      const T* b = B + k * N;
      for (int64_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

template <typename T>
void gemm_nt(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  for (int64_t i = 0; i < M; ++i) {
    const T* a = A + i * K;
    T* c = C + i * N;
    for (int64_t j = 0; j < N; ++j) {
      const T* b = B + j * K;
      T acc = T(0);
      for (int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
      c[j] = accumulate ? c[j] + acc : acc;
    }
  }
}

template <typename T>
void gemm_tn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  if (!accumulate) {
    for (int64_t i = 0; i < M * N; ++i) C[i] = T(0);
  }
  for (int64_t k = 0; k < K; ++k) {
    const T* a = A + k * M;
    const T* b = B + k * N;
    for (int64_t i = 0; i < M; ++i) {
      T av = a[i];
      T* c = C + i * N;
      for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

template <typename T>
T dot(const T* a, const T* b, int64_t n) {
  T acc = T(0);
  for (int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
T sum(const T* x, int64_t n) {
  T acc = T(0);
  for (int64_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <typename T>
T sumsq(const T* x, int64_t n) {
  T acc = T(0);
  for (int64_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

template <typename T>
void axpy(int64_t n, T a, const T* x, T* y) {
  for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void scale(int64_t n, T a, T* x) {
  for (int64_t i = 0; i < n; ++i) x[i] *= a;
}

template <typename T>
void relu_fwd(int64_t n, const T* x, T* y) {
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_bwd(int64_t n, const T* y, const T* dy, T* dx) {
  for (int64_t i = 0; i < n; ++i) dx[i] = y[i] > T(0) ? dy[i] : T(0);
}

template <typename T>
void sgd_step(int64_t n, T* p, const T* g, T* buf, T lr, T mu, T wd) {
  for (int64_t i = 0; i < n; ++i) {
    T gi = g[i] + wd * p[i];
    T bi = mu * buf[i] + gi;
    buf[i] = bi;
    p[i] -= lr * bi;
  }
}

template <typename T>
void ema(int64_t n, T* k, const T* q, T m) {
  for (int64_t i = 0; i < n; ++i) k[i] = m * k[i] + (T(1) - m) * q[i];
}

template <typename T>
void scale_shift(int64_t n, T a, T b, const T* x, T* y) {
  for (int64_t i = 0; i < n; ++i) y[i] = a * x[i] + b;
}

template <typename T>
void triad(int64_t n, T a, T b, T c, const T* x, const T* y, T* out) {
  for (int64_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i] + c;
}

}  // namespace densecl::kernels::ref
