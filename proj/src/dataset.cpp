// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#include "densecl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "densecl/common.hpp"
#include "densecl/image_io.hpp"
#include "densecl/rng.hpp"

namespace densecl::data {

namespace fs = std::filesystem;

int Dataset::num_classes() const {
  std::set<int> c(labels.begin(), labels.end());
  return static_cast<int>(c.size());
}

void SynthSpec::validate() const {
  DCL_CHECK(n_images >= 1 && image_size >= 1 && n_classes >= 1 && seed >= 1, ConfigError,
            "synth spec fields must all be >= 1");
}

Dataset ingest_folder(const std::string& data_dir) {
  DCL_CHECK(fs::is_directory(data_dir), DataError,
            "ingest: '" + data_dir + "' is not a directory");

  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(data_dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    if (ext == ".ppm" || ext == ".png") files.push_back(e.path().filename().string());
  }
  std::sort(files.begin(), files.end());

  std::map<std::string, int> label_map;
  bool has_labels = fs::exists(fs::path(data_dir) / "labels.csv");
  if (has_labels) {
    std::ifstream lf(fs::path(data_dir) / "labels.csv");
    DCL_CHECK(lf.good(), IoError, "ingest: cannot open labels.csv");
    std::string line;
    bool first = true;
    while (std::getline(lf, line)) {
      if (line.empty()) continue;
      auto comma = line.find(',');
      DCL_CHECK(comma != std::string::npos, DataError,
                "labels.csv: malformed row '" + line + "'");
      std::string name = line.substr(0, comma);
      std::string val = line.substr(comma + 1);
      if (first) {
        first = false;
        // tolerate a header row
        if (val.find_first_not_of("0123456789 \r") != std::string::npos) continue;
      }
      try {
        label_map[name] = std::stoi(val);
      } catch (const std::exception&) {
        throw DataError("labels.csv: non-integer class for '" + name + "'");
      }
    }
  }

  Dataset ds;
  for (const auto& name : files) {
    std::string path = (fs::path(data_dir) / name).string();
    int label = -1;
    if (has_labels) {
      auto it = label_map.find(name);
      DCL_CHECK(it != label_map.end(), DataError,
                "labels.csv: no class entry for '" + name + "'");
      label = it->second;
    }
    try {
      Image img = io::read_image(path);
      if (has_labels) ds.labels.push_back(label);
      ds.images.push_back(std::move(img));
      ds.names.push_back(name);
    } catch (const Error& e) {
      if (e.category() == ErrorCategory::io) throw;
      std::cerr << "warning: skipping '" << name << "': " << e.what() << "\n";
      ds.skipped.push_back(name);
    }
  }
  DCL_CHECK(!ds.images.empty(), DataError,
            "ingest: no decodable images found under '" + data_dir + "'");
  return ds;
}

namespace {

struct Color {
  float r, g, b;
};

Color jitter_color(const Color& c, Rng& rng, double amt) {
  auto j = [&](float v) {
    float o = v + static_cast<float>(rng.uniform(-amt, amt));
    return std::min(1.0f, std::max(0.0f, o));
  };
  return {j(c.r), j(c.g), j(c.b)};
}

void blend_px(Image& img, int y, int x, const Color& c, float alpha) {
  if (alpha <= 0.0f) return;
  for (int ch = 0; ch < 3; ++ch) {
    float v = ch == 0 ? c.r : (ch == 1 ? c.g : c.b);
    img.at(y, x, ch) = img.at(y, x, ch) * (1.0f - alpha) + v * alpha;
  }
}

void draw_circle(Image& img, float cx, float cy, float r, const Color& c) {
  int y0 = std::max(0, static_cast<int>(cy - r - 1)), y1 = std::min(img.height() - 1, static_cast<int>(cy + r + 1));
  int x0 = std::max(0, static_cast<int>(cx - r - 1)), x1 = std::min(img.width() - 1, static_cast<int>(cx + r + 1));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      float d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy));
      blend_px(img, y, x, c, std::min(1.0f, std::max(0.0f, r - d + 0.5f)));
    }
}

void draw_square(Image& img, float cx, float cy, float half, const Color& c) {
  int y0 = std::max(0, static_cast<int>(cy - half - 1)), y1 = std::min(img.height() - 1, static_cast<int>(cy + half + 1));
  int x0 = std::max(0, static_cast<int>(cx - half - 1)), x1 = std::min(img.width() - 1, static_cast<int>(cx + half + 1));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      float d = half - std::max(std::fabs(x - cx), std::fabs(y - cy));
      blend_px(img, y, x, c, std::min(1.0f, std::max(0.0f, d + 0.5f)));
    }
}

void draw_triangle(Image& img, float cx, float cy, float size, const Color& c) {
  // upright triangle as intersection of three half-planes
  float h = size * 0.866f;
  float ax = cx, ay = cy - h;            // apex
  float bx = cx - size, by = cy + h * 0.5f;
  float dx = cx + size, dy = cy + h * 0.5f;
  auto edge = [](float px, float py, float x1, float y1, float x2, float y2) {
    // signed distance to the line through (x1,y1)-(x2,y2), positive inside CCW
    float ex = x2 - x1, ey = y2 - y1;
    float len = std::sqrt(ex * ex + ey * ey);
    return ((px - x1) * ey - (py - y1) * ex) / (len > 0 ? len : 1.0f);
  };
  int y0 = std::max(0, static_cast<int>(cy - h - 1)), y1 = std::min(img.height() - 1, static_cast<int>(cy + h + 1));
  int x0 = std::max(0, static_cast<int>(cx - size - 1)), x1 = std::min(img.width() - 1, static_cast<int>(cx + size + 1));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      float d1 = edge(x, y, ax, ay, bx, by);
      float d2 = edge(x, y, bx, by, dx, dy);
      float d3 = edge(x, y, dx, dy, ax, ay);
      float d = std::min(d1, std::min(d2, d3));
      blend_px(img, y, x, c, std::min(1.0f, std::max(0.0f, d + 0.5f)));
    }
}

void draw_stripes(Image& img, float angle, float phase, float width, const Color& c) {
  float nx = std::cos(angle), ny = std::sin(angle);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      float t = nx * x + ny * y + phase;
      float m = std::fabs(std::fmod(std::fabs(t), 2.0f * width) - width);
      blend_px(img, y, x, c, std::min(1.0f, std::max(0.0f, (width * 0.45f - m) + 0.5f)) * 0.9f);
    }
}

}  // namespace

Image synth_image(const SynthSpec& spec, int index) {
  const int sz = spec.image_size;
  const int cls = index % spec.n_classes;
  Rng rng(derive_seed(spec.seed, 0xDA7A, static_cast<uint64_t>(index)));

  // fixed per-class palettes keep classes separable for the probe
  static const Color kPalette[4] = {
      {0.85f, 0.30f, 0.15f},  // warm red
      {0.15f, 0.35f, 0.85f},  // blue
      {0.20f, 0.70f, 0.30f},  // green
      {0.70f, 0.25f, 0.80f},  // purple
  };
  static const Color kTint[4] = {
      {0.35f, 0.22f, 0.18f},
      {0.18f, 0.22f, 0.35f},
      {0.18f, 0.30f, 0.20f},
      {0.30f, 0.20f, 0.32f},
  };
  Color base = kPalette[cls % 4];
  Color tint = kTint[cls % 4];

  // smooth value-noise background (bilinear over a coarse random grid)
  Image img(sz, sz);
  constexpr int kGrid = 5;
  float grid[kGrid][kGrid][3];
  for (int gy = 0; gy < kGrid; ++gy)
    for (int gx = 0; gx < kGrid; ++gx) {
      grid[gy][gx][0] = tint.r + static_cast<float>(rng.uniform(-0.12, 0.12));
      grid[gy][gx][1] = tint.g + static_cast<float>(rng.uniform(-0.12, 0.12));
      grid[gy][gx][2] = tint.b + static_cast<float>(rng.uniform(-0.12, 0.12));
    }
  for (int y = 0; y < sz; ++y)
    for (int x = 0; x < sz; ++x) {
      float fy = static_cast<float>(y) / (sz - 1) * (kGrid - 1);
      float fx = static_cast<float>(x) / (sz - 1) * (kGrid - 1);
      int iy = std::min(kGrid - 2, static_cast<int>(fy));
      int ix = std::min(kGrid - 2, static_cast<int>(fx));
      float ty = fy - iy, tx = fx - ix;
      for (int c = 0; c < 3; ++c) {
        float top = grid[iy][ix][c] * (1 - tx) + grid[iy][ix + 1][c] * tx;
        float bot = grid[iy + 1][ix][c] * (1 - tx) + grid[iy + 1][ix + 1][c] * tx;
        img.at(y, x, c) = std::min(1.0f, std::max(0.0f, top * (1 - ty) + bot * ty));
      }
    }

  const float s = static_cast<float>(sz);
  auto upos = [&](double lo, double hi) { return static_cast<float>(rng.uniform(lo, hi)) * s; };

  switch (cls % 4) {
    case 0:
      draw_circle(img, upos(0.2, 0.8), upos(0.2, 0.8), upos(0.14, 0.24), jitter_color(base, rng, 0.1));
      draw_circle(img, upos(0.2, 0.8), upos(0.2, 0.8), upos(0.07, 0.12), jitter_color(base, rng, 0.15));
      break;
    case 1:
      draw_square(img, upos(0.2, 0.8), upos(0.2, 0.8), upos(0.12, 0.2), jitter_color(base, rng, 0.1));
      draw_square(img, upos(0.2, 0.8), upos(0.2, 0.8), upos(0.06, 0.1), jitter_color(base, rng, 0.15));
      break;
    case 2:
      draw_triangle(img, upos(0.25, 0.75), upos(0.3, 0.75), upos(0.14, 0.22), jitter_color(base, rng, 0.1));
      draw_triangle(img, upos(0.25, 0.75), upos(0.3, 0.75), upos(0.07, 0.11), jitter_color(base, rng, 0.15));
      break;
    default:
      draw_stripes(img, static_cast<float>(rng.uniform(0.5, 1.1)),
                   static_cast<float>(rng.uniform(0.0, 16.0)), s * 0.09f,
                   jitter_color(base, rng, 0.1));
      draw_circle(img, upos(0.25, 0.75), upos(0.25, 0.75), upos(0.08, 0.14),
                  jitter_color({0.9f, 0.85f, 0.2f}, rng, 0.1));
      break;
  }

  // a few bright marker dots make local texture unambiguous for matching
  int dots = 2 + static_cast<int>(rng.below(3));
  for (int d = 0; d < dots; ++d) {
    Color dc{static_cast<float>(rng.uniform(0.4, 1.0)), static_cast<float>(rng.uniform(0.4, 1.0)),
             static_cast<float>(rng.uniform(0.4, 1.0))};
    draw_circle(img, upos(0.08, 0.92), upos(0.08, 0.92), upos(0.02, 0.045), dc);
  }
  return img;
}

Dataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.images.reserve(static_cast<size_t>(spec.n_images));
  for (int i = 0; i < spec.n_images; ++i) {
    ds.images.push_back(synth_image(spec, i));
    ds.labels.push_back(i % spec.n_classes);
    ds.names.push_back("synth_" + std::to_string(i));
  }
  return ds;
}

}  // namespace densecl::data
