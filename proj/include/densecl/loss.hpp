// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <vector>

#include "densecl/tensor.hpp"

namespace densecl::loss {

struct LossConfig {
  double temperature = 0.2;
  double lambda = 0.5;
  int64_t warmup_iters = 0;
  double warmup_lambda = 0.0;
  // The textbook InfoNCE applies the temperature to every logit. The printed
  // form of the objective leaves the positive term in the denominator
  // unscaled; setting this keeps that literal form for comparison runs.
  bool literal_denominator = false;

  void validate() const;
};

struct LossReport {
  double l_global = 0.0;
  double l_dense = 0.0;
  double l_total = 0.0;
  double lambda_used = 0.0;
};

/// Softmax cross-entropy over one positive and n negatives, all logits
/// divided by tau (max-subtracted log-sum-exp). Optional dq receives
/// dL/dq (overwritten). q and k_plus are expected unit-norm.
template <typename T>
double info_nce(const T* q, const T* k_plus, const TensorT<T>& negatives, int64_t dim,
                double tau, bool literal_denominator = false, T* dq = nullptr);

/// Mean of per-cell InfoNCE terms over all grid cells; query cell s is paired
/// with key cell corr[s], and every query shares the same negative set.
/// Optional d_queries receives dL/dqueries.
template <typename T>
double dense_info_nce(const TensorT<T>& queries, const TensorT<T>& keys,
                      const std::vector<int>& corr, const TensorT<T>& negatives, double tau,
                      bool literal_denominator = false, TensorT<T>* d_queries = nullptr);

/// (1-lambda)*l_global + lambda*l_dense; lambda must lie in [0,1].
double combined_loss(double l_global, double l_dense, double lambda);

/// warmup_lambda while iteration < warmup_iters, the configured lambda from
/// the warmup boundary on.
double lambda_at(int64_t iteration, const LossConfig& cfg);

// ---- batched forms used by the trainer ----

/// Mean InfoNCE over rows of Q [B,E] with positives K [B,E]; d_q (optional)
/// receives d(mean)/dQ.
template <typename T>
double batch_info_nce(const TensorT<T>& q, const TensorT<T>& k_plus,
                      const TensorT<T>& negatives, double tau, bool literal_denominator,
                      TensorT<T>* d_q);

/// Mean dense loss over a batch: queries/keys [B,S*S,E], corr flattened to
/// B*S*S entries (per-image blocks). d_queries (optional) gets [B,S*S,E].
template <typename T>
double batch_dense_info_nce(const TensorT<T>& queries, const TensorT<T>& keys,
                            const std::vector<int>& corr, const TensorT<T>& negatives,
                            double tau, bool literal_denominator, TensorT<T>* d_queries);

}  // namespace densecl::loss
