// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

// AVX-512F lane, mirroring the AVX2 lane with an 8x32 microkernel.

#include <immintrin.h>

#include <cstring>
#include <vector>

#include "kernels/ops_table.hpp"

namespace densecl::kernels {
namespace {

constexpr int64_t MR = 8;
constexpr int64_t NR = 32;
constexpr int64_t KC = 384;
constexpr int64_t MC = 128;  // multiple of MR
constexpr int64_t NC = 512;  // multiple of NR

void pack_a(const float* src, int64_t rs, int64_t cs, int64_t rows, int64_t cols,
            float* out) {
  for (int64_t p = 0; p < rows; p += MR) {
    int64_t pr = rows - p < MR ? rows - p : MR;
    for (int64_t k = 0; k < cols; ++k) {
      const float* s = src + k * cs + p * rs;
      for (int64_t r = 0; r < pr; ++r) out[k * MR + r] = s[r * rs];
      for (int64_t r = pr; r < MR; ++r) out[k * MR + r] = 0.0f;
    }
    out += MR * cols;
  }
}

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

void micro_8x32(int64_t kc, const float* a, const float* b, float* c, int64_t ldc,
                bool acc, int64_t mr, int64_t nr) {
  __m512 r[16];
  for (auto& v : r) v = _mm512_setzero_ps();
  for (int64_t k = 0; k < kc; ++k) {
    const __m512 b0 = _mm512_loadu_ps(b);
    const __m512 b1 = _mm512_loadu_ps(b + 16);
    b += NR;
    for (int i = 0; i < 8; ++i) {
      const __m512 av = _mm512_set1_ps(a[i]);
      r[2 * i] = _mm512_fmadd_ps(av, b0, r[2 * i]);
      r[2 * i + 1] = _mm512_fmadd_ps(av, b1, r[2 * i + 1]);
    }
    a += MR;
  }
  if (mr == MR && nr == NR) {
    for (int i = 0; i < 8; ++i) {
      float* cr = c + i * ldc;
      if (acc) {
        r[2 * i] = _mm512_add_ps(r[2 * i], _mm512_loadu_ps(cr));
        r[2 * i + 1] = _mm512_add_ps(r[2 * i + 1], _mm512_loadu_ps(cr + 16));
      }
      _mm512_storeu_ps(cr, r[2 * i]);
      _mm512_storeu_ps(cr + 16, r[2 * i + 1]);
    }
  } else {
    alignas(64) float tmp[MR * NR];
    for (int i = 0; i < 8; ++i) {
      _mm512_store_ps(tmp + i * NR, r[2 * i]);
      _mm512_store_ps(tmp + i * NR + 16, r[2 * i + 1]);
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
  int64_t a_rs, a_cs;
  int64_t b_rs, b_cs;
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
            micro_8x32(kc, ap, bp, C + (ic + ir) * N + jc + jr, N, acc, mr, nr);
          }
        }
      }
    }
  }
}

void gemm_nn_avx512(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
                    float* C, bool acc) {
  gemm_blocked(M, N, K, A, B, C, acc, {K, 1, N, 1});
}
void gemm_nt_avx512(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
                    float* C, bool acc) {
  gemm_blocked(M, N, K, A, B, C, acc, {K, 1, 1, K});
}
void gemm_tn_avx512(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
                    float* C, bool acc) {
  gemm_blocked(M, N, K, A, B, C, acc, {1, M, N, 1});
}

float dot_avx512(const float* a, const float* b, int64_t n) {
  __m512 acc0 = _mm512_setzero_ps(), acc1 = _mm512_setzero_ps();
  int64_t i = 0;
  for (; i + 32 <= n; i += 32) {
    acc0 = _mm512_fmadd_ps(_mm512_loadu_ps(a + i), _mm512_loadu_ps(b + i), acc0);
    acc1 = _mm512_fmadd_ps(_mm512_loadu_ps(a + i + 16), _mm512_loadu_ps(b + i + 16), acc1);
  }
  for (; i + 16 <= n; i += 16)
    acc0 = _mm512_fmadd_ps(_mm512_loadu_ps(a + i), _mm512_loadu_ps(b + i), acc0);
  float s = _mm512_reduce_add_ps(_mm512_add_ps(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

float sum_avx512(const float* x, int64_t n) {
  __m512 acc = _mm512_setzero_ps();
  int64_t i = 0;
  for (; i + 16 <= n; i += 16) acc = _mm512_add_ps(acc, _mm512_loadu_ps(x + i));
  float s = _mm512_reduce_add_ps(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

float sumsq_avx512(const float* x, int64_t n) {
  __m512 acc = _mm512_setzero_ps();
  int64_t i = 0;
  for (; i + 16 <= n; i += 16) {
    __m512 v = _mm512_loadu_ps(x + i);
    acc = _mm512_fmadd_ps(v, v, acc);
  }
  float s = _mm512_reduce_add_ps(acc);
  for (; i < n; ++i) s += x[i] * x[i];
  return s;
}

void axpy_avx512(int64_t n, float a, const float* x, float* y) {
  const __m512 av = _mm512_set1_ps(a);
  int64_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(y + i, _mm512_fmadd_ps(av, _mm512_loadu_ps(x + i), _mm512_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale_avx512(int64_t n, float a, float* x) {
  const __m512 av = _mm512_set1_ps(a);
  int64_t i = 0;
  for (; i + 16 <= n; i += 16) _mm512_storeu_ps(x + i, _mm512_mul_ps(av, _mm512_loadu_ps(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

void relu_fwd_avx512(int64_t n, const float* x, float* y) {
  const __m512 z = _mm512_setzero_ps();
  int64_t i = 0;
  for (; i + 16 <= n; i += 16) _mm512_storeu_ps(y + i, _mm512_max_ps(z, _mm512_loadu_ps(x + i)));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_avx512(int64_t n, const float* y, const float* dy, float* dx) {
  const __m512 z = _mm512_setzero_ps();
  int64_t i = 0;
  for (; i + 16 <= n; i += 16) {
    __mmask16 m = _mm512_cmp_ps_mask(_mm512_loadu_ps(y + i), z, _CMP_GT_OQ);
    _mm512_storeu_ps(dx + i, _mm512_maskz_mov_ps(m, _mm512_loadu_ps(dy + i)));
  }
  for (; i < n; ++i) dx[i] = y[i] > 0.0f ? dy[i] : 0.0f;
}

void sgd_step_avx512(int64_t n, float* p, const float* g, float* buf, float lr, float mu,
                     float wd) {
  const __m512 lrv = _mm512_set1_ps(lr), muv = _mm512_set1_ps(mu), wdv = _mm512_set1_ps(wd);
  int64_t i = 0;
  for (; i + 16 <= n; i += 16) {
    __m512 pv = _mm512_loadu_ps(p + i);
    __m512 gv = _mm512_fmadd_ps(wdv, pv, _mm512_loadu_ps(g + i));
    __m512 bv = _mm512_fmadd_ps(muv, _mm512_loadu_ps(buf + i), gv);
    _mm512_storeu_ps(buf + i, bv);
    _mm512_storeu_ps(p + i, _mm512_fnmadd_ps(lrv, bv, pv));
  }
  for (; i < n; ++i) {
    float gi = g[i] + wd * p[i];
    float bi = mu * buf[i] + gi;
    buf[i] = bi;
    p[i] -= lr * bi;
  }
}

void scale_shift_avx512(int64_t n, float a, float b, const float* x, float* y) {
  const __m512 av = _mm512_set1_ps(a), bv = _mm512_set1_ps(b);
  int64_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(y + i, _mm512_fmadd_ps(av, _mm512_loadu_ps(x + i), bv));
  for (; i < n; ++i) y[i] = a * x[i] + b;
}

void triad_avx512(int64_t n, float a, float b, float c, const float* x, const float* y,
                  float* out) {
  const __m512 av = _mm512_set1_ps(a), bv = _mm512_set1_ps(b), cv = _mm512_set1_ps(c);
  int64_t i = 0;
  for (; i + 16 <= n; i += 16) {
    __m512 t = _mm512_fmadd_ps(bv, _mm512_loadu_ps(y + i), cv);
    _mm512_storeu_ps(out + i, _mm512_fmadd_ps(av, _mm512_loadu_ps(x + i), t));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i] + c;
}

void ema_avx512(int64_t n, float* k, const float* q, float m) {
  const __m512 mv = _mm512_set1_ps(m), om = _mm512_set1_ps(1.0f - m);
  int64_t i = 0;
  for (; i + 16 <= n; i += 16) {
    __m512 kv = _mm512_mul_ps(mv, _mm512_loadu_ps(k + i));
    _mm512_storeu_ps(k + i, _mm512_fmadd_ps(om, _mm512_loadu_ps(q + i), kv));
  }
  for (; i < n; ++i) k[i] = m * k[i] + (1.0f - m) * q[i];
}

}  // namespace

const OpsTable& avx512_table() {
  static const OpsTable t = {
      &gemm_nn_avx512, &gemm_nt_avx512,  &gemm_tn_avx512,  &dot_avx512,
      &sum_avx512,     &sumsq_avx512,    &axpy_avx512,     &scale_avx512,
      &relu_fwd_avx512, &relu_bwd_avx512, &sgd_step_avx512, &ema_avx512,
      &scale_shift_avx512, &triad_avx512,
  };
  return t;
}

}  // namespace densecl::kernels
