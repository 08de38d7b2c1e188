// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#include "kernels/ops_table.hpp"
#include "kernels/ref_impl.hpp"

namespace densecl::kernels {

const OpsTable& scalar_table() {
  static const OpsTable t = {
      &ref::gemm_nn<float>, &ref::gemm_nt<float>, &ref::gemm_tn<float>,
      &ref::dot<float>,     &ref::sum<float>,     &ref::sumsq<float>,
      &ref::axpy<float>,    &ref::scale<float>,   &ref::relu_fwd<float>,
      &ref::relu_bwd<float>, &ref::sgd_step<float>, &ref::ema<float>,
      &ref::scale_shift<float>, &ref::triad<float>,
  };
  return t;
}

// Double entry points: reference path only, no dispatch.
void gemm_nn(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C,
             bool acc) {
  ref::gemm_nn(M, N, K, A, B, C, acc);
}
void gemm_nt(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C,
             bool acc) {
  ref::gemm_nt(M, N, K, A, B, C, acc);
}
void gemm_tn(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C,
             bool acc) {
  ref::gemm_tn(M, N, K, A, B, C, acc);
}
double dot(const double* a, const double* b, int64_t n) { return ref::dot(a, b, n); }
double sum(const double* x, int64_t n) { return ref::sum(x, n); }
double sumsq(const double* x, int64_t n) { return ref::sumsq(x, n); }
void axpy(int64_t n, double a, const double* x, double* y) { ref::axpy(n, a, x, y); }
void scale(int64_t n, double a, double* x) { ref::scale(n, a, x); }
void relu_fwd(int64_t n, const double* x, double* y) { ref::relu_fwd(n, x, y); }
void relu_bwd(int64_t n, const double* y, const double* dy, double* dx) {
  ref::relu_bwd(n, y, dy, dx);
}
void sgd_step(int64_t n, double* p, const double* g, double* buf, double lr, double mu,
              double wd) {
  ref::sgd_step(n, p, g, buf, lr, mu, wd);
}
void ema(int64_t n, double* k, const double* q, double m) { ref::ema(n, k, q, m); }
void scale_shift(int64_t n, double a, double b, const double* x, double* y) {
  ref::scale_shift(n, a, b, x, y);
}
void triad(int64_t n, double a, double b, double c, const double* x, const double* y,
           double* out) {
  ref::triad(n, a, b, c, x, y, out);
}

}  // namespace densecl::kernels
