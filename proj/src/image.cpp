// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#include "densecl/image.hpp"

#include <algorithm>
#include <cmath>

namespace densecl {

void Image::clamp01() {
  for (auto& v : px_) v = std::min(1.0f, std::max(0.0f, v));
}

float bilinear_sample(const Image& img, float x, float y, int c, int x0, int y0, int w,
                      int h) {
  // Clamp into the crop rectangle so samples never read outside it.
  float xl = static_cast<float>(x0), xr = static_cast<float>(x0 + w - 1);
  float yt = static_cast<float>(y0), yb = static_cast<float>(y0 + h - 1);
  x = std::min(xr, std::max(xl, x));
  y = std::min(yb, std::max(yt, y));
  int ix = std::min(x0 + w - 1, std::max(x0, static_cast<int>(std::floor(x))));
  int iy = std::min(y0 + h - 1, std::max(y0, static_cast<int>(std::floor(y))));
  int ix1 = std::min(ix + 1, x0 + w - 1);
  int iy1 = std::min(iy + 1, y0 + h - 1);
  float fx = x - static_cast<float>(ix);
  float fy = y - static_cast<float>(iy);
  float v00 = img.at(iy, ix, c), v01 = img.at(iy, ix1, c);
  float v10 = img.at(iy1, ix, c), v11 = img.at(iy1, ix1, c);
  float top = v00 + (v01 - v00) * fx;
  float bot = v10 + (v11 - v10) * fx;
  return top + (bot - top) * fy;
}

}  // namespace densecl
