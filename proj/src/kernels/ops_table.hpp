// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>

namespace densecl::kernels {

// One function-pointer table per lane; dispatch.cpp picks the active one.
struct OpsTable {
  void (*gemm_nn)(int64_t, int64_t, int64_t, const float*, const float*, float*, bool);
  void (*gemm_nt)(int64_t, int64_t, int64_t, const float*, const float*, float*, bool);
  void (*gemm_tn)(int64_t, int64_t, int64_t, const float*, const float*, float*, bool);
  float (*dot)(const float*, const float*, int64_t);
  float (*sum)(const float*, int64_t);
  float (*sumsq)(const float*, int64_t);
  void (*axpy)(int64_t, float, const float*, float*);
  void (*scale)(int64_t, float, float*);
  void (*relu_fwd)(int64_t, const float*, float*);
  void (*relu_bwd)(int64_t, const float*, const float*, float*);
  void (*sgd_step)(int64_t, float*, const float*, float*, float, float, float);
  void (*ema)(int64_t, float*, const float*, float);
  void (*scale_shift)(int64_t, float, float, const float*, float*);
  void (*triad)(int64_t, float, float, float, const float*, const float*, float*);
};

const OpsTable& scalar_table();
const OpsTable& avx2_table();    // only call if the CPU supports AVX2+FMA
const OpsTable& avx512_table();  // only call if the CPU supports AVX-512F

}  // namespace densecl::kernels
