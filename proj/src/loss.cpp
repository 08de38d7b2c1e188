// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#include "densecl/loss.hpp"

#include <cmath>

#include "densecl/common.hpp"
#include "densecl/kernels.hpp"

namespace densecl::loss {

void LossConfig::validate() const {
  DCL_CHECK(temperature > 0.0, ConfigError, "loss.temperature must be > 0");
  DCL_CHECK(lambda >= 0.0 && lambda <= 1.0, ConfigError, "loss.lambda must lie in [0,1]");
  DCL_CHECK(warmup_lambda >= 0.0 && warmup_lambda <= 1.0, ConfigError,
            "loss.warmup_lambda must lie in [0,1]");
  DCL_CHECK(warmup_iters >= 0, ConfigError, "loss.warmup_iters must be >= 0");
}

double combined_loss(double l_global, double l_dense, double lambda) {
  DCL_CHECK(lambda >= 0.0 && lambda <= 1.0, ConfigError, "lambda must lie in [0,1]");
  return (1.0 - lambda) * l_global + lambda * l_dense;
}

double lambda_at(int64_t iteration, const LossConfig& cfg) {
  DCL_CHECK(iteration >= 0, ConfigError, "iteration must be >= 0");
  return iteration < cfg.warmup_iters ? cfg.warmup_lambda : cfg.lambda;
}

namespace {

template <typename T>
void check_finite(const T* p, int64_t n, const char* what) {
  for (int64_t i = 0; i < n; ++i)
    DCL_CHECK(std::isfinite(static_cast<double>(p[i])), NumericError,
              std::string("info_nce: non-finite ") + what);
}

// Shared core over rows. For row b:
//   s0 = q_b . kp_b, s_j = neg_logits[b*n_neg + j]  (raw dot products)
// Uniform mode logits: z = s/tau everywhere. Literal mode: the denominator's
// positive term stays unscaled (z0_den = s0, z0_num = s0/tau).
// Loss_b = -s0/tau + lse(den logits). Gradients are written through dq with
// per-row scale gscale (d mean -> gscale = 1/rows).
template <typename T>
int64_t neg_count(const TensorT<T>& negatives) {
  return negatives.numel() == 0 ? 0 : negatives.dim(0);
}

template <typename T>
double nce_rows(int64_t rows, int64_t dim, const T* q, const T* kp, const TensorT<T>& negs,
                TensorT<T>* neg_logits, double tau, bool literal, T* dq, double gscale) {
  const int64_t n_neg = neg_count(negs);
  double loss_sum = 0.0;

  for (int64_t b = 0; b < rows; ++b) {
    const T* qb = q + b * dim;
    const T* kb = kp + b * dim;
    double s0 = static_cast<double>(kernels::dot(qb, kb, dim));
    T* zrow = n_neg > 0 ? neg_logits->data() + b * n_neg : nullptr;

    double z0_den = literal ? s0 : s0 / tau;
    double m = z0_den;
    for (int64_t j = 0; j < n_neg; ++j) {
      double zj = static_cast<double>(zrow[j]) / tau;
      if (zj > m) m = zj;
    }
    double sum = std::exp(z0_den - m);
    for (int64_t j = 0; j < n_neg; ++j)
      sum += std::exp(static_cast<double>(zrow[j]) / tau - m);
    double lse = m + std::log(sum);
    double loss_b = -s0 / tau + lse;
    DCL_CHECK(std::isfinite(loss_b), NumericError, "info_nce: non-finite loss");
    loss_sum += loss_b;

    if (dq) {
      double p0 = std::exp(z0_den - lse);
      // positive-key coefficient
      double c0 = literal ? (p0 - 1.0 / tau) : (p0 - 1.0) / tau;
      T* dqb = dq + b * dim;
      for (int64_t i = 0; i < dim; ++i)
        dqb[i] = static_cast<T>(c0 * gscale * static_cast<double>(kb[i]));
      // overwrite the logit row with softmax coefficients for the gemm below
      for (int64_t j = 0; j < n_neg; ++j) {
        double pj = std::exp(static_cast<double>(zrow[j]) / tau - lse);
        zrow[j] = static_cast<T>(pj / tau * gscale);
      }
    }
  }

  if (dq && n_neg > 0)
    kernels::gemm_nn(rows, dim, n_neg, neg_logits->data(), negs.data(), dq, true);
  return loss_sum;
}

template <typename T>
double nce_driver(int64_t rows, int64_t dim, const T* q, const T* kp,
                  const TensorT<T>& negatives, double tau, bool literal, T* dq) {
  DCL_CHECK(tau > 0.0, ConfigError, "info_nce: temperature must be > 0");
  DCL_CHECK(negatives.numel() == 0 || negatives.dim(1) == dim, DataError,
            "info_nce: negative key dimensionality mismatch");
  check_finite(q, rows * dim, "query");
  check_finite(kp, rows * dim, "positive key");
  check_finite(negatives.data(), negatives.numel(), "negative keys");

  const int64_t n_neg = neg_count(negatives);
  TensorT<T> neg_logits;
  if (n_neg > 0) {
    neg_logits = TensorT<T>({rows, n_neg});
    kernels::gemm_nt(rows, n_neg, dim, q, negatives.data(), neg_logits.data(), false);
  }
  double sum = nce_rows(rows, dim, q, kp, negatives, &neg_logits, tau, literal, dq,
                        dq ? 1.0 / static_cast<double>(rows) : 0.0);
  return sum / static_cast<double>(rows);
}

}  // namespace

template <typename T>
double info_nce(const T* q, const T* k_plus, const TensorT<T>& negatives, int64_t dim,
                double tau, bool literal_denominator, T* dq) {
  return nce_driver(1, dim, q, k_plus, negatives, tau, literal_denominator, dq);
}

template <typename T>
double batch_info_nce(const TensorT<T>& q, const TensorT<T>& k_plus,
                      const TensorT<T>& negatives, double tau, bool literal_denominator,
                      TensorT<T>* d_q) {
  DCL_CHECK(q.rank() == 2 && q.same_shape(k_plus), DataError,
            "batch_info_nce: query/key shape mismatch");
  if (d_q) *d_q = TensorT<T>(q.shape());
  return nce_driver(q.dim(0), q.dim(1), q.data(), k_plus.data(), negatives, tau,
                    literal_denominator, d_q ? d_q->data() : nullptr);
}

template <typename T>
double dense_info_nce(const TensorT<T>& queries, const TensorT<T>& keys,
                      const std::vector<int>& corr, const TensorT<T>& negatives, double tau,
                      bool literal_denominator, TensorT<T>* d_queries) {
  DCL_CHECK(queries.rank() == 2 && queries.same_shape(keys), DataError,
            "dense_info_nce: queries/keys must both be [S*S,E]");
  const int64_t cells = queries.dim(0), dim = queries.dim(1);
  DCL_CHECK(static_cast<int64_t>(corr.size()) == cells, DataError,
            "dense_info_nce: correspondence length mismatch");
  TensorT<T> kp({cells, dim});
  for (int64_t s = 0; s < cells; ++s) {
    int c = corr[static_cast<size_t>(s)];
    DCL_CHECK(c >= 0 && c < cells, DataError, "dense_info_nce: correspondence out of range");
    std::copy(keys.data() + static_cast<int64_t>(c) * dim,
              keys.data() + static_cast<int64_t>(c + 1) * dim, kp.data() + s * dim);
  }
  if (d_queries) *d_queries = TensorT<T>(queries.shape());
  return nce_driver(cells, dim, queries.data(), kp.data(), negatives, tau,
                    literal_denominator, d_queries ? d_queries->data() : nullptr);
}

template <typename T>
double batch_dense_info_nce(const TensorT<T>& queries, const TensorT<T>& keys,
                            const std::vector<int>& corr, const TensorT<T>& negatives,
                            double tau, bool literal_denominator, TensorT<T>* d_queries) {
  DCL_CHECK(queries.rank() == 3 && queries.same_shape(keys), DataError,
            "batch_dense_info_nce: queries/keys must both be [B,S*S,E]");
  const int64_t b = queries.dim(0), cells = queries.dim(1), dim = queries.dim(2);
  DCL_CHECK(static_cast<int64_t>(corr.size()) == b * cells, DataError,
            "batch_dense_info_nce: correspondence length mismatch");
  TensorT<T> kp({b * cells, dim});
  for (int64_t bi = 0; bi < b; ++bi) {
    const T* kb = keys.data() + bi * cells * dim;
    for (int64_t s = 0; s < cells; ++s) {
      int c = corr[static_cast<size_t>(bi * cells + s)];
      DCL_CHECK(c >= 0 && c < cells, DataError,
                "batch_dense_info_nce: correspondence out of range");
      std::copy(kb + static_cast<int64_t>(c) * dim, kb + static_cast<int64_t>(c + 1) * dim,
                kp.data() + (bi * cells + s) * dim);
    }
  }
  if (d_queries) *d_queries = TensorT<T>(queries.shape());
  // per-image mean over S*S cells then mean over images == flat mean
  return nce_driver(b * cells, dim, queries.data(), kp.data(), negatives, tau,
                    literal_denominator, d_queries ? d_queries->data() : nullptr);
}

template double info_nce(const float*, const float*, const TensorT<float>&, int64_t, double,
                         bool, float*);
template double info_nce(const double*, const double*, const TensorT<double>&, int64_t,
                         double, bool, double*);
template double dense_info_nce(const TensorT<float>&, const TensorT<float>&,
                               const std::vector<int>&, const TensorT<float>&, double, bool,
                               TensorT<float>*);
template double dense_info_nce(const TensorT<double>&, const TensorT<double>&,
                               const std::vector<int>&, const TensorT<double>&, double, bool,
                               TensorT<double>*);
template double batch_info_nce(const TensorT<float>&, const TensorT<float>&,
                               const TensorT<float>&, double, bool, TensorT<float>*);
template double batch_info_nce(const TensorT<double>&, const TensorT<double>&,
                               const TensorT<double>&, double, bool, TensorT<double>*);
template double batch_dense_info_nce(const TensorT<float>&, const TensorT<float>&,
                                     const std::vector<int>&, const TensorT<float>&, double,
                                     bool, TensorT<float>*);
template double batch_dense_info_nce(const TensorT<double>&, const TensorT<double>&,
                                     const std::vector<int>&, const TensorT<double>&, double,
                                     bool, TensorT<double>*);

}  // namespace densecl::loss
