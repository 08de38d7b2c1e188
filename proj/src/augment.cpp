// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#include "densecl/augment.hpp"

#include <algorithm>
#include <cmath>

namespace densecl::augment {

namespace {

float luma(float r, float g, float b) {
  return 0.299f * r + 0.587f * g + 0.114f * b;
}

void apply_brightness(Image& img, float f) {
  float* p = img.data();
  for (size_t i = 0; i < img.size(); ++i)
    p[i] = std::min(1.0f, std::max(0.0f, p[i] * f));
}

void apply_contrast(Image& img, float f) {
  double acc = 0.0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      acc += luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
  float mean = static_cast<float>(acc / (static_cast<double>(img.height()) * img.width()));
  float* p = img.data();
  for (size_t i = 0; i < img.size(); ++i)
    p[i] = std::min(1.0f, std::max(0.0f, mean + (p[i] - mean) * f));
}

void apply_saturation(Image& img, float f) {
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      float g = luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
      for (int c = 0; c < 3; ++c) {
        float v = g + (img.at(y, x, c) - g) * f;
        img.at(y, x, c) = std::min(1.0f, std::max(0.0f, v));
      }
    }
  }
}

}  // namespace

Image to_grayscale(const Image& img) {
  Image out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      float g = luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
      out.at(y, x, 0) = out.at(y, x, 1) = out.at(y, x, 2) = g;
    }
  }
  return out;
}

Image gaussian_blur(const Image& img, double sigma) {
  int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> kern(static_cast<size_t>(2 * radius + 1));
  double s = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kern[static_cast<size_t>(i + radius)] = static_cast<float>(v);
    s += v;
  }
  for (auto& v : kern) v = static_cast<float>(v / s);

  int h = img.height(), w = img.width();
  Image tmp(h, w), out(h, w);
  // horizontal pass, clamp-to-edge
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc[3] = {0, 0, 0};
      for (int i = -radius; i <= radius; ++i) {
        int xi = std::min(w - 1, std::max(0, x + i));
        float kv = kern[static_cast<size_t>(i + radius)];
        for (int c = 0; c < 3; ++c) acc[c] += kv * img.at(y, xi, c);
      }
      for (int c = 0; c < 3; ++c) tmp.at(y, x, c) = acc[c];
    }
  }
  // vertical pass
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc[3] = {0, 0, 0};
      for (int i = -radius; i <= radius; ++i) {
        int yi = std::min(h - 1, std::max(0, y + i));
        float kv = kern[static_cast<size_t>(i + radius)];
        for (int c = 0; c < 3; ++c) acc[c] += kv * tmp.at(yi, x, c);
      }
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = std::min(1.0f, std::max(0.0f, acc[c]));
    }
  }
  return out;
}

Image resample_view(const Image& img, const ViewGeometry& g) {
  Image out(g.out_size, g.out_size);
  float sx = static_cast<float>(g.crop_w) / static_cast<float>(g.out_size);
  float sy = static_cast<float>(g.crop_h) / static_cast<float>(g.out_size);
  for (int i = 0; i < g.out_size; ++i) {
    float src_y = static_cast<float>(g.crop_y) + (static_cast<float>(i) + 0.5f) * sy - 0.5f;
    for (int j = 0; j < g.out_size; ++j) {
      float xv = g.flipped ? static_cast<float>(g.out_size - 1 - j) : static_cast<float>(j);
      float src_x = static_cast<float>(g.crop_x) + (xv + 0.5f) * sx - 0.5f;
      for (int c = 0; c < 3; ++c)
        out.at(i, j, c) =
            bilinear_sample(img, src_x, src_y, c, g.crop_x, g.crop_y, g.crop_w, g.crop_h);
    }
  }
  return out;
}

std::pair<Image, ViewGeometry> geometric_augment(const Image& img, Rng& rng,
                                                 const AugmentConfig& cfg) {
  int h = img.height(), w = img.width();
  DCL_CHECK(std::min(h, w) >= 8, DataError,
            "geometric_augment: image side below minimum of 8 pixels");
  DCL_CHECK(cfg.scale_min > 0.0 && cfg.scale_max <= 1.0 && cfg.scale_min <= cfg.scale_max,
            ConfigError, "augment scale range must lie in (0,1]");
  DCL_CHECK(cfg.out_size >= 1, ConfigError, "augment out_size must be >= 1");

  // Area fraction with source aspect retained, so the crop->view map stays a
  // per-axis affine transform with an exact closed-form inverse.
  double scale = rng.uniform(cfg.scale_min, cfg.scale_max);
  double side = std::sqrt(scale);
  int cw = std::min(w, std::max(1, static_cast<int>(std::lround(side * w))));
  int ch = std::min(h, std::max(1, static_cast<int>(std::lround(side * h))));
  int cx = static_cast<int>(rng.below(static_cast<uint64_t>(w - cw + 1)));
  int cy = static_cast<int>(rng.below(static_cast<uint64_t>(h - ch + 1)));
  bool flip = rng.bernoulli(cfg.flip_prob);

  ViewGeometry geom{cx, cy, cw, ch, flip, cfg.out_size};
  return {resample_view(img, geom), geom};
}

Image photometric_augment(const Image& view, Rng& rng, const AugmentConfig& cfg) {
  Image out = view;
  if (rng.bernoulli(cfg.jitter_prob)) {
    float fb = static_cast<float>(rng.uniform(cfg.jitter_min, cfg.jitter_max));
    float fc = static_cast<float>(rng.uniform(cfg.jitter_min, cfg.jitter_max));
    float fs = static_cast<float>(rng.uniform(cfg.jitter_min, cfg.jitter_max));
    apply_brightness(out, fb);
    apply_contrast(out, fc);
    apply_saturation(out, fs);
  }
  if (rng.bernoulli(cfg.grayscale_prob)) out = to_grayscale(out);
  if (rng.bernoulli(cfg.blur_prob)) {
    double sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
    out = gaussian_blur(out, sigma);
  }
  return out;
}

ViewPair make_view_pair(const Image& img, int64_t source_id, const Rng& rng,
                        const AugmentConfig& cfg) {
  Rng fork = rng;
  Rng rng_a(derive_seed(fork.next(), 0xa));
  Rng rng_b(derive_seed(fork.next(), 0xb));

  ViewPair pair;
  pair.source_id = source_id;
  auto [va, ga] = geometric_augment(img, rng_a, cfg);
  pair.view_a = photometric_augment(va, rng_a, cfg);
  pair.geom_a = ga;
  auto [vb, gb] = geometric_augment(img, rng_b, cfg);
  pair.view_b = photometric_augment(vb, rng_b, cfg);
  pair.geom_b = gb;
  return pair;
}

std::vector<int> ground_truth_correspondence(const ViewGeometry& geom_a,
                                             const ViewGeometry& geom_b, int grid_s) {
  DCL_CHECK(grid_s >= 1, ConfigError, "grid size must be >= 1");
  const double out_a = geom_a.out_size, out_b = geom_b.out_size;
  const double cell_a = out_a / grid_s, cell_b = out_b / grid_s;
  std::vector<int> mapping(static_cast<size_t>(grid_s) * grid_s, kInvalidCell);

  auto nearest_cell = [&](double coord) {
    // continuous cell coordinate; integers land exactly on centers; distance
    // ties break toward the lower index
    double cont = (coord + 0.5) / cell_b - 0.5;
    int c = static_cast<int>(std::ceil(cont - 0.5));
    return std::min(grid_s - 1, std::max(0, c));
  };

  for (int r = 0; r < grid_s; ++r) {
    for (int c = 0; c < grid_s; ++c) {
      double vx = (c + 0.5) * cell_a - 0.5;
      double vy = (r + 0.5) * cell_a - 0.5;
      if (geom_a.flipped) vx = (out_a - 1.0) - vx;
      double sx = geom_a.crop_x + (vx + 0.5) * (geom_a.crop_w / out_a) - 0.5;
      double sy = geom_a.crop_y + (vy + 0.5) * (geom_a.crop_h / out_a) - 0.5;
      double bx = (sx - geom_b.crop_x + 0.5) * (out_b / geom_b.crop_w) - 0.5;
      double by = (sy - geom_b.crop_y + 0.5) * (out_b / geom_b.crop_h) - 0.5;
      if (geom_b.flipped) bx = (out_b - 1.0) - bx;
      if (bx < -0.5 || bx > out_b - 0.5 || by < -0.5 || by > out_b - 0.5) continue;
      mapping[static_cast<size_t>(r) * grid_s + c] =
          nearest_cell(by) * grid_s + nearest_cell(bx);
    }
  }
  return mapping;
}

}  // namespace densecl::augment
