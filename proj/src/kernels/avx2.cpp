// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

// AVX2+FMA lane. GEMM uses a packed 6x16 microkernel with GotoBLAS-style
// blocking; everything else is straightforward vectorization with scalar
// tails. Equivalence against the scalar lane is covered in test_kernels.

#include <immintrin.h>

#include <cstring>
#include <vector>

#include "kernels/ops_table.hpp"

namespace densecl::kernels {
namespace {

constexpr int64_t MR = 6;
constexpr int64_t NR = 16;
constexpr int64_t KC = 256;
constexpr int64_t MC = 72;   // multiple of MR
constexpr int64_t NC = 512;  // multiple of NR

// Packs a logical (rows x cols) matrix given by strides into MR-row panels,
// zero-padding the row tail. Panel p stores cols k-major: ap[p][k*MR + r].
void pack_a(const float* src, int64_t rs, int64_t cs, int64_t rows, int64_t cols,
            float* out) {
  for (int64_t p = 0; p < rows; p += MR) {
    int64_t pr = rows - p < MR ? rows - p : MR;
    if (cs == 1) {
      for (int64_t k = 0; k < cols; ++k) {
        for (int64_t r = 0; r < pr; ++r) out[k * MR + r] = src[(p + r) * rs + k];
        for (int64_t r = pr; r < MR; ++r) out[k * MR + r] = 0.0f;
      }
    } else {
      for (int64_t k = 0; k < cols; ++k) {
        const float* s = src + k * cs + p * rs;
        for (int64_t r = 0; r < pr; ++r) out[k * MR + r] = s[r * rs];
        for (int64_t r = pr; r < MR; ++r) out[k * MR + r] = 0.0f;
      }
    }
    out += MR * cols;
  }
}

// Packs a logical (K x cols) block into NR-column panels: bp[q][k*NR + j].
void pack_b(const float* src, int64_t rs, int64_t cs, int64_t depth, int64_t cols,
            float* out) {
  for (int64_t q = 0; q < cols; q += NR) {
    int64_t qc = cols - q < NR ? cols - q : NR;
    if (cs == 1 && qc == NR) {
      for (int64_t k = 0; k < depth; ++k)
        std::memcpy(out + k * NR, src + k * rs + q, NR * sizeof(float));
    } else {
      for (int64_t k = 0; k < depth; ++k) {
        const float* s = src + k * rs + q * cs;
        for (int64_t j = 0; j < qc; ++j) out[k * NR + j] = s[j * cs];
        for (int64_t j = qc; j < NR; ++j) out[k * NR + j] = 0.0f;
      }
    }
    out += NR * depth;
  }
}

void micro_6x16(int64_t kc, const float* a, const float* b, float* c, int64_t ldc,
                bool acc, int64_t mr, int64_t nr) {
  __m256 r[12];
  for (auto& v : r) v = _mm256_setzero_ps();
  for (int64_t k = 0; k < kc; ++k) {
    const __m256 b0 = _mm256_loadu_ps(b);
    const __m256 b1 = _mm256_loadu_ps(b + 8);
    b += NR;
    for (int i = 0; i < 6; ++i) {
      const __m256 av = _mm256_broadcast_ss(a + i);
      r[2 * i] = _mm256_fmadd_ps(av, b0, r[2 * i]);
      r[2 * i + 1] = _mm256_fmadd_ps(av, b1, r[2 * i + 1]);
    }
    a += MR;
  }
  if (mr == MR && nr == NR) {
    for (int i = 0; i < 6; ++i) {
      float* cr = c + i * ldc;
      if (acc) {
        r[2 * i] = _mm256_add_ps(r[2 * i], _mm256_loadu_ps(cr));
        r[2 * i + 1] = _mm256_add_ps(r[2 * i + 1], _mm256_loadu_ps(cr + 8));
      }
      _mm256_storeu_ps(cr, r[2 * i]);
      _mm256_storeu_ps(cr + 8, r[2 * i + 1]);
    }
  } else {
    alignas(32) float tmp[MR * NR];
    for (int i = 0; i < 6; ++i) {
      _mm256_store_ps(tmp + i * NR, r[2 * i]);
      _mm256_store_ps(tmp + i * NR + 8, r[2 * i + 1]);
    }
    for (int64_t i = 0; i < mr; ++i) {
      float* cr = c + i * ldc;
      if (acc) {
        for (int64_t j = 0; j < nr; ++j) cr[j] += tmp[i * NR + j];
      } else {
        for (int64_t j = 0; j < nr; ++j) cr[j] = tmp[i * NR + j];
      }
    }
  }
}

struct Strides {
  int64_t a_rs, a_cs;  // logical A (M x K)
  int64_t b_rs, b_cs;  // logical B (K x N)
};

void gemm_blocked(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
                  float* C, bool accumulate, Strides st) {
  thread_local std::vector<float> abuf, bbuf;
  abuf.resize(static_cast<size_t>(MC * KC));
  bbuf.resize(static_cast<size_t>(KC * NC));
  for (int64_t jc = 0; jc < N; jc += NC) {
    int64_t nc = N - jc < NC ? N - jc : NC;
    for (int64_t pc = 0; pc < K; pc += KC) {
      int64_t kc = K - pc < KC ? K - pc : KC;
      pack_b(B + pc * st.b_rs + jc * st.b_cs, st.b_rs, st.b_cs, kc, nc, bbuf.data());
      bool acc = accumulate || pc > 0;
      for (int64_t ic = 0; ic < M; ic += MC) {
        int64_t mc = M - ic < MC ? M - ic : MC;
        pack_a(A + ic * st.a_rs + pc * st.a_cs, st.a_rs, st.a_cs, mc, kc, abuf.data());
        for (int64_t jr = 0; jr < nc; jr += NR) {
          const float* bp = bbuf.data() + jr * kc;
          int64_t nr = nc - jr < NR ? nc - jr : NR;
          for (int64_t ir = 0; ir < mc; ir += MR) {
            const float* ap = abuf.data() + ir * kc;
            int64_t mr = mc - ir < MR ? mc - ir : MR;
            micro_6x16(kc, ap, bp, C + (ic + ir) * N + jc + jr, N, acc, mr, nr);
          }
        }
      }
    }
  }
}

void gemm_nn_avx2(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
                  float* C, bool acc) {
  gemm_blocked(M, N, K, A, B, C, acc, {K, 1, N, 1});
}
void gemm_nt_avx2(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
                  float* C, bool acc) {
  // logical B^T: element (k, n) lives at B[n*K + k]
  gemm_blocked(M, N, K, A, B, C, acc, {K, 1, 1, K});
}
void gemm_tn_avx2(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
                  float* C, bool acc) {
  // logical A^T: element (m, k) lives at A[k*M + m]
  gemm_blocked(M, N, K, A, B, C, acc, {1, M, N, 1});
}

float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
  return _mm_cvtss_f32(lo);
}

float dot_avx2(const float* a, const float* b, int64_t n) {
  __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
  __m256 acc2 = _mm256_setzero_ps(), acc3 = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 32 <= n; i += 32) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
    acc2 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 16), _mm256_loadu_ps(b + i + 16), acc2);
    acc3 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 24), _mm256_loadu_ps(b + i + 24), acc3);
  }
  for (; i + 8 <= n; i += 8)
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  float s = hsum(_mm256_add_ps(_mm256_add_ps(acc0, acc1), _mm256_add_ps(acc2, acc3)));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

float sum_avx2(const float* x, int64_t n) {
  __m256 acc = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
  float s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

float sumsq_avx2(const float* x, int64_t n) {
  __m256 acc = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_loadu_ps(x + i);
    acc = _mm256_fmadd_ps(v, v, acc);
  }
  float s = hsum(acc);
  for (; i < n; ++i) s += x[i] * x[i];
  return s;
}

void axpy_avx2(int64_t n, float a, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(a);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale_avx2(int64_t n, float a, float* x) {
  const __m256 av = _mm256_set1_ps(a);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

void relu_fwd_avx2(int64_t n, const float* x, float* y) {
  const __m256 z = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(z, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_avx2(int64_t n, const float* y, const float* dy, float* dx) {
  const __m256 z = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(y + i), z, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_and_ps(mask, _mm256_loadu_ps(dy + i)));
  }
  for (; i < n; ++i) dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
}

void sgd_step_avx2(int64_t n, float* p, const float* g, float* buf, float lr, float mu,
                   float wd) {
  const __m256 lrv = _mm256_set1_ps(lr), muv = _mm256_set1_ps(mu), wdv = _mm256_set1_ps(wd);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 pv = _mm256_loadu_ps(p + i);
    __m256 gv = _mm256_fmadd_ps(wdv, pv, _mm256_loadu_ps(g + i));
    __m256 bv = _mm256_fmadd_ps(muv, _mm256_loadu_ps(buf + i), gv);
    _mm256_storeu_ps(buf + i, bv);
    _mm256_storeu_ps(p + i, _mm256_fnmadd_ps(lrv, bv, pv));
  }
  for (; i < n; ++i) {
    float gi = g[i] + wd * p[i];
    float bi = mu * buf[i] + gi;
    buf[i] = bi;
    p[i] -= lr * bi;
  }
}

void scale_shift_avx2(int64_t n, float a, float b, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(a), bv = _mm256_set1_ps(b);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), bv));
  for (; i < n; ++i) y[i] = a * x[i] + b;
}

void triad_avx2(int64_t n, float a, float b, float c, const float* x, const float* y,
                float* out) {
  const __m256 av = _mm256_set1_ps(a), bv = _mm256_set1_ps(b), cv = _mm256_set1_ps(c);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 t = _mm256_fmadd_ps(bv, _mm256_loadu_ps(y + i), cv);
    _mm256_storeu_ps(out + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), t));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i] + c;
}

void ema_avx2(int64_t n, float* k, const float* q, float m) {
  const __m256 mv = _mm256_set1_ps(m), om = _mm256_set1_ps(1.0f - m);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 kv = _mm256_mul_ps(mv, _mm256_loadu_ps(k + i));
    _mm256_storeu_ps(k + i, _mm256_fmadd_ps(om, _mm256_loadu_ps(q + i), kv));
  }
  for (; i < n; ++i) k[i] = m * k[i] + (1.0f - m) * q[i];
}

}  // namespace

const OpsTable& avx2_table() {
  static const OpsTable t = {
      &gemm_nn_avx2, &gemm_nt_avx2, &gemm_tn_avx2, &dot_avx2,      &sum_avx2,      &sumsq_avx2,
      &axpy_avx2,    &scale_avx2,   &relu_fwd_avx2, &relu_bwd_avx2, &sgd_step_avx2, &ema_avx2,
      &scale_shift_avx2, &triad_avx2,
  };
  return t;
}

}  // namespace densecl::kernels
