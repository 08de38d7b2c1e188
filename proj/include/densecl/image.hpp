// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <vector>

#include "densecl/common.hpp"

namespace densecl {

/// H x W x 3 interleaved float image, values in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int h, int w) : h_(h), w_(w), px_(static_cast<size_t>(h) * w * 3, 0.0f) {
    DCL_CHECK(h >= 1 && w >= 1, DataError, "image dims must be >= 1");
  }

  int height() const { return h_; }
  int width() const { return w_; }

  float* data() { return px_.data(); }
  const float* data() const { return px_.data(); }
  size_t size() const { return px_.size(); }

  float& at(int y, int x, int c) { return px_[(static_cast<size_t>(y) * w_ + x) * 3 + c]; }
  const float& at(int y, int x, int c) const {
    return px_[(static_cast<size_t>(y) * w_ + x) * 3 + c];
  }

  bool operator==(const Image& o) const {
    return h_ == o.h_ && w_ == o.w_ && px_ == o.px_;
  }

  void clamp01();

 private:
  int h_ = 0, w_ = 0;
  std::vector<float> px_;
};

/// Bilinear sample at continuous (x, y) in half-pixel-center convention,
/// clamped to the rectangle [x0, x0+w-1] x [y0, y0+h-1] of source pixels.
float bilinear_sample(const Image& img, float x, float y, int c, int x0, int y0, int w,
                      int h);

}  // namespace densecl
