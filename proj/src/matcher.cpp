// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#include "densecl/matcher.hpp"

#include <cmath>

#include "densecl/common.hpp"
#include "densecl/encoder.hpp"
#include "densecl/kernels.hpp"

namespace densecl::matcher {

MatchStrategy parse_strategy(const std::string& s) {
  if (s == "random") return MatchStrategy::random;
  if (s == "max_sim_theta") return MatchStrategy::max_sim_theta;
  if (s == "max_sim_f") return MatchStrategy::max_sim_f;
  throw ConfigError("match.strategy: unknown value '" + s +
                    "' (expected random|max_sim_theta|max_sim_f)");
}

const char* strategy_name(MatchStrategy s) {
  switch (s) {
    case MatchStrategy::random: return "random";
    case MatchStrategy::max_sim_theta: return "max_sim_theta";
    case MatchStrategy::max_sim_f: return "max_sim_f";
  }
  return "?";
}

template <typename T>
T cosine_similarity(const T* u, const T* v, int64_t dim) {
  double nu = std::sqrt(static_cast<double>(kernels::sumsq(u, dim)));
  double nv = std::sqrt(static_cast<double>(kernels::sumsq(v, dim)));
  DCL_CHECK(nu > 1e-12 && nv > 1e-12, NumericError,
            "cosine_similarity: degenerate (near-zero) input vector");
  return static_cast<T>(static_cast<double>(kernels::dot(u, v, dim)) / (nu * nv));
}

namespace {

// Returns l2-normalized copy of rows; strict=true rejects degenerate rows,
// strict=false leaves them at zero.
template <typename T>
TensorT<T> normalized_rows(const TensorT<T>& rows, bool strict) {
  const int64_t n = rows.dim(0), d = rows.dim(1);
  TensorT<T> out(rows.shape());
  for (int64_t r = 0; r < n; ++r) {
    const T* src = rows.data() + r * d;
    double norm = std::sqrt(static_cast<double>(kernels::sumsq(src, d)));
    if (norm <= 1e-12) {
      DCL_CHECK(!strict, NumericError,
                "similarity_matrix: row " + std::to_string(r) + " has near-zero norm");
      continue;
    }
    T inv = static_cast<T>(1.0 / norm);
    T* dst = out.data() + r * d;
    for (int64_t i = 0; i < d; ++i) dst[i] = src[i] * inv;
  }
  return out;
}

template <typename T>
TensorT<T> similarity_impl(const TensorT<T>& a, const TensorT<T>& b, bool strict) {
  DCL_CHECK(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1), DataError,
            "similarity_matrix: row dimensionality mismatch");
  TensorT<T> an = normalized_rows(a, strict);
  TensorT<T> bn = normalized_rows(b, strict);
  TensorT<T> delta({a.dim(0), b.dim(0)});
  kernels::gemm_nt(a.dim(0), b.dim(0), a.dim(1), an.data(), bn.data(), delta.data(), false);
  return delta;
}

}  // namespace

template <typename T>
TensorT<T> similarity_matrix(const TensorT<T>& a_rows, const TensorT<T>& b_rows) {
  return similarity_impl(a_rows, b_rows, /*strict=*/true);
}

template <typename T>
std::vector<int> argmax_match(const TensorT<T>& delta) {
  const int64_t n = delta.dim(0), m = delta.dim(1);
  DCL_CHECK(m >= 1, DataError, "argmax_match: empty similarity matrix");
  std::vector<int> c(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const T* row = delta.data() + i * m;
    int best = 0;
    for (int64_t j = 1; j < m; ++j)
      if (row[j] > row[best]) best = static_cast<int>(j);
    c[static_cast<size_t>(i)] = best;
  }
  return c;
}

template <typename T>
TensorT<T> fmap_rows(const TensorT<T>& f) {
  DCL_CHECK(f.rank() == 3, DataError, "fmap_rows expects [C,H,W]");
  const int64_t c = f.dim(0), hw = f.dim(1) * f.dim(2);
  TensorT<T> rows({hw, c});
  for (int64_t ch = 0; ch < c; ++ch) {
    const T* plane = f.data() + ch * hw;
    for (int64_t cell = 0; cell < hw; ++cell) rows[cell * c + ch] = plane[cell];
  }
  return rows;
}

namespace {

template <typename T>
TensorT<T> pooled_rows(const TensorT<T>& f, int grid_s) {
  TensorT<T> batched = f;
  batched.reshape({1, f.dim(0), f.dim(1), f.dim(2)});
  TensorT<T> pooled = nn::adaptive_avg_pool(batched, grid_s);
  pooled.reshape({f.dim(0), static_cast<int64_t>(grid_s), static_cast<int64_t>(grid_s)});
  return fmap_rows(pooled);
}

}  // namespace

template <typename T>
std::vector<int> extract_correspondence(MatchStrategy strategy, const TensorT<T>& f1,
                                        const TensorT<T>& f2, const TensorT<T>& d1,
                                        const TensorT<T>& d2, int grid_s, Rng& rng) {
  const int64_t cells = static_cast<int64_t>(grid_s) * grid_s;
  switch (strategy) {
    case MatchStrategy::random: {
      std::vector<int> c(static_cast<size_t>(cells));
      for (auto& v : c) v = static_cast<int>(rng.below(static_cast<uint64_t>(cells)));
      return c;
    }
    case MatchStrategy::max_sim_theta: {
      DCL_CHECK(d1.rank() == 2 && d1.dim(0) == cells && d2.dim(0) == cells, DataError,
                "extract_correspondence: dense embeddings grid size mismatch");
      return argmax_match(similarity_matrix(d1, d2));
    }
    case MatchStrategy::max_sim_f: {
      TensorT<T> r1 = pooled_rows(f1, grid_s);
      TensorT<T> r2 = pooled_rows(f2, grid_s);
      return argmax_match(similarity_matrix(r1, r2));
    }
  }
  throw ConfigError("extract_correspondence: invalid strategy");
}

template <typename T>
std::vector<MutualMatch> mutual_matches(const TensorT<T>& f1, const TensorT<T>& f2,
                                        double threshold) {
  DCL_CHECK(f1.rank() == 3 && f1.shape() == f2.shape(), DataError,
            "mutual_matches: feature maps must have equal shapes");
  TensorT<T> r1 = fmap_rows(f1);
  TensorT<T> r2 = fmap_rows(f2);
  TensorT<T> delta = similarity_impl(r1, r2, /*strict=*/false);
  const int64_t n = delta.dim(0);

  std::vector<int> fwd = argmax_match(delta);
  // argmax along the other direction (columns of delta)
  std::vector<int> bwd(static_cast<size_t>(n));
  for (int64_t j = 0; j < n; ++j) {
    int best = 0;
    for (int64_t i = 1; i < n; ++i)
      if (delta.at(i, j) > delta.at(best, j)) best = static_cast<int>(i);
    bwd[static_cast<size_t>(j)] = best;
  }

  std::vector<MutualMatch> out;
  for (int64_t i = 0; i < n; ++i) {
    int j = fwd[static_cast<size_t>(i)];
    if (bwd[static_cast<size_t>(j)] != static_cast<int>(i)) continue;
    double s12 = static_cast<double>(delta.at(i, j));
    double avg = 0.5 * (s12 + s12);
    if (avg >= threshold) out.push_back({static_cast<int>(i), j, avg});
  }
  return out;
}

template float cosine_similarity(const float*, const float*, int64_t);
template double cosine_similarity(const double*, const double*, int64_t);
template TensorT<float> similarity_matrix(const TensorT<float>&, const TensorT<float>&);
template TensorT<double> similarity_matrix(const TensorT<double>&, const TensorT<double>&);
template std::vector<int> argmax_match(const TensorT<float>&);
template std::vector<int> argmax_match(const TensorT<double>&);
template TensorT<float> fmap_rows(const TensorT<float>&);
template TensorT<double> fmap_rows(const TensorT<double>&);
template std::vector<int> extract_correspondence(MatchStrategy, const TensorT<float>&,
                                                 const TensorT<float>&, const TensorT<float>&,
                                                 const TensorT<float>&, int, Rng&);
template std::vector<int> extract_correspondence(MatchStrategy, const TensorT<double>&,
                                                 const TensorT<double>&, const TensorT<double>&,
                                                 const TensorT<double>&, int, Rng&);
template std::vector<MutualMatch> mutual_matches(const TensorT<float>&, const TensorT<float>&,
                                                 double);
template std::vector<MutualMatch> mutual_matches(const TensorT<double>&, const TensorT<double>&,
                                                 double);

}  // namespace densecl::matcher
