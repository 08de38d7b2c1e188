// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <string>
#include <vector>

#include "densecl/augment.hpp"
#include "densecl/dataset.hpp"
#include "densecl/trainer.hpp"

namespace densecl::eval {

struct MatchRecord {
  int cell_a = 0, cell_b = 0;
  double similarity = 0.0;
  double ax = 0, ay = 0, bx = 0, by = 0;  // cell centers in view pixel coords
};

struct CorrEvalResult {
  double accuracy = 0.0;        // correct within Chebyshev distance 1 on the grid
  double exact_accuracy = 0.0;  // exact-cell agreement
  double mean_valid = 0.0;      // mean ground-truth-valid queries per pair
  int64_t evaluated = 0;
  int n_pairs = 0;
};

/// Fraction of grid queries whose max-sim-F correspondence lands within one
/// grid cell (Chebyshev) of the geometric ground truth. Pairs use geometric
/// augmentation only unless `photometric` is set; cells without valid ground
/// truth are excluded. Deterministic given (state, seed).
CorrEvalResult correspondence_accuracy(trainer::TrainState& state,
                                       const std::vector<Image>& images, int grid_s,
                                       int n_pairs, uint64_t seed,
                                       const augment::AugmentConfig& aug,
                                       bool photometric = false);

/// Global embeddings of whole images (resized to out_size, eval mode).
Tensor embed_images(trainer::TrainState& state, const std::vector<Image>& images,
                    int out_size);

/// Predictions only — labels of the test set never enter here.
std::vector<int> knn_predict(trainer::TrainState& state, const data::Dataset& train_set,
                             const std::vector<Image>& test_images, int k, int out_size);

double score_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

/// Cosine k-NN probe on global embeddings: majority vote over the k nearest
/// train embeddings, ties toward the smallest class id.
double knn_probe(trainer::TrainState& state, const data::Dataset& train_set,
                 const data::Dataset& test_set, int k, int out_size);

struct ExportResult {
  Image panel;
  std::vector<MatchRecord> records;
};

/// Two views of one image, reciprocal matches on full-resolution backbone
/// features, a side-by-side panel with one line per match, and the match
/// table. threshold -1 keeps every mutual match.
ExportResult export_matches(trainer::TrainState& state, const Image& image,
                            double threshold, uint64_t seed,
                            const augment::AugmentConfig& aug);

/// CSV with header "cell_a,cell_b,sim,ax,ay,bx,by".
void write_match_csv(const std::string& path, const std::vector<MatchRecord>& records);

}  // namespace densecl::eval
