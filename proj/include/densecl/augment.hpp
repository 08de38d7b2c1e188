// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <vector>

#include "densecl/image.hpp"
#include "densecl/rng.hpp"

namespace densecl::augment {

/// Exact geometry of one augmented view: source-space crop box, flip flag,
/// and the square output size. Recorded purely so evaluation can recover
/// ground-truth grid correspondence; training never reads it.
struct ViewGeometry {
  int crop_x = 0, crop_y = 0;   // top-left of the crop in source coords
  int crop_w = 0, crop_h = 0;
  bool flipped = false;
  int out_size = 0;

  bool operator==(const ViewGeometry&) const = default;
};

struct AugmentConfig {
  int out_size = 64;
  double scale_min = 0.2;       // crop area fraction range, aspect kept 1:1
  double scale_max = 1.0;
  double flip_prob = 0.5;
  double jitter_prob = 0.8;     // gates brightness/contrast/saturation jointly
  double jitter_min = 0.6;      // per-factor uniform range
  double jitter_max = 1.4;
  double grayscale_prob = 0.2;
  double blur_prob = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
};

struct ViewPair {
  Image view_a, view_b;
  ViewGeometry geom_a, geom_b;
  int64_t source_id = 0;
};

/// Random resized crop (area fraction in cfg scale range, source aspect kept)
/// plus horizontal flip, resampled to out_size x out_size with bilinear
/// half-pixel-center interpolation.
std::pair<Image, ViewGeometry> geometric_augment(const Image& img, Rng& rng,
                                                 const AugmentConfig& cfg);

/// Deterministic crop+flip+resize for a pinned geometry.
Image resample_view(const Image& img, const ViewGeometry& g);

/// Color jitter, grayscale conversion and gaussian blur; output clamped to
/// [0,1]. Pixel positions are untouched, so recorded geometry stays valid.
Image photometric_augment(const Image& view, Rng& rng, const AugmentConfig& cfg);

/// Two independent augmented views of one source image. The two views draw
/// from independent substreams of rng, so a pair is reproducible from the
/// stream seed alone.
ViewPair make_view_pair(const Image& img, int64_t source_id, const Rng& rng,
                        const AugmentConfig& cfg);

constexpr int kInvalidCell = -1;

/// For each grid cell of view A, the nearest grid cell of view B covering the
/// same source content, or kInvalidCell when the cell center falls outside
/// view B. Purely geometric; used as the evaluation oracle for matching.
std::vector<int> ground_truth_correspondence(const ViewGeometry& geom_a,
                                             const ViewGeometry& geom_b, int grid_s);

/// Separable gaussian blur with clamp-to-edge padding (exposed for tests).
Image gaussian_blur(const Image& img, double sigma);

/// All-channels-equal luma conversion (ITU-R 601 weights).
Image to_grayscale(const Image& img);

}  // namespace densecl::augment
