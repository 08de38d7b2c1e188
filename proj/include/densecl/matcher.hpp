// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <string>
#include <vector>

#include "densecl/rng.hpp"
#include "densecl/tensor.hpp"

namespace densecl::matcher {

/// How the positive-key correspondence across two views is extracted.
/// max_sim_f (pooled backbone features) is the default; max_sim_theta uses
/// the dense-head embeddings; random assigns cells uniformly.
enum class MatchStrategy { random, max_sim_theta, max_sim_f };

MatchStrategy parse_strategy(const std::string& s);
const char* strategy_name(MatchStrategy s);

/// Cosine of two vectors; throws NumericError for near-zero inputs
/// (norm < 1e-12).
template <typename T>
T cosine_similarity(const T* u, const T* v, int64_t dim);

/// Pairwise cosine matrix of two row sets, computed as one matrix product of
/// l2-normalized rows. Rows with norm < 1e-12 are rejected.
template <typename T>
TensorT<T> similarity_matrix(const TensorT<T>& a_rows, const TensorT<T>& b_rows);

/// Row-wise argmax with ties broken toward the lowest index.
template <typename T>
std::vector<int> argmax_match(const TensorT<T>& delta);

/// Correspondence from view 1 cells to view 2 cells under the given
/// strategy. f1/f2 are single-image backbone maps [C,H,W]; d1/d2 are dense
/// embeddings [S*S,E]. rng is consumed only by the random strategy.
template <typename T>
std::vector<int> extract_correspondence(MatchStrategy strategy, const TensorT<T>& f1,
                                        const TensorT<T>& f2, const TensorT<T>& d1,
                                        const TensorT<T>& d2, int grid_s, Rng& rng);

struct MutualMatch {
  int cell_a = 0;
  int cell_b = 0;
  double similarity = 0.0;
};

/// Reciprocal argmax matches between full-resolution feature maps, keeping
/// pairs whose averaged similarity reaches the threshold. (The two
/// directional similarities are the same cosine entry; the average is kept
/// explicit for the record.) Cells with zero features never match.
template <typename T>
std::vector<MutualMatch> mutual_matches(const TensorT<T>& f1, const TensorT<T>& f2,
                                        double threshold);

/// Flattens a [C,H,W] map into [H*W, C] rows (cell index = y*W + x).
template <typename T>
TensorT<T> fmap_rows(const TensorT<T>& f);

}  // namespace densecl::matcher
