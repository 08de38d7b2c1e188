// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#include "densecl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "densecl/kernels.hpp"
#include "densecl/matcher.hpp"

namespace densecl::eval {

namespace {

constexpr uint64_t kEvalTag = 0xE7A1;

augment::AugmentConfig geometric_only(const augment::AugmentConfig& aug) {
  augment::AugmentConfig g = aug;
  g.jitter_prob = 0.0;
  g.grayscale_prob = 0.0;
  g.blur_prob = 0.0;
  return g;
}

Tensor views_to_tensor(const std::vector<Image>& views) {
  const int64_t b = static_cast<int64_t>(views.size());
  const int side = views.empty() ? 0 : views[0].height();
  Tensor t({b, 3, side, side});
  for (int64_t i = 0; i < b; ++i)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
          t.at(i, c, y, x) = views[static_cast<size_t>(i)].at(y, x, c);
  return t;
}

Tensor slice3(const Tensor& t, int64_t b) {
  Tensor out({t.dim(1), t.dim(2), t.dim(3)});
  const int64_t n = out.numel();
  std::copy(t.data() + b * n, t.data() + (b + 1) * n, out.data());
  return out;
}

}  // namespace

CorrEvalResult correspondence_accuracy(trainer::TrainState& state,
                                       const std::vector<Image>& images, int grid_s,
                                       int n_pairs, uint64_t seed,
                                       const augment::AugmentConfig& aug, bool photometric) {
  DCL_CHECK(!images.empty(), DataError, "correspondence_accuracy: dataset is empty");
  DCL_CHECK(n_pairs >= 1, ConfigError, "correspondence_accuracy: n_pairs must be >= 1");
  augment::AugmentConfig cfg = photometric ? aug : geometric_only(aug);

  Rng pick(derive_seed(seed, kEvalTag, 1));
  const int64_t cells = static_cast<int64_t>(grid_s) * grid_s;
  int64_t correct = 0, exact = 0, evaluated = 0;

  const int chunk = 32;  // pairs per forward batch
  std::vector<augment::ViewPair> pairs;
  Rng unused(0);
  for (int p0 = 0; p0 < n_pairs; p0 += chunk) {
    int pc = std::min(chunk, n_pairs - p0);
    pairs.clear();
    std::vector<Image> views;
    for (int p = 0; p < pc; ++p) {
      int64_t idx = static_cast<int64_t>(pick.below(images.size()));
      Rng rng(derive_seed(seed, kEvalTag, 2, static_cast<uint64_t>(p0 + p) << 20 |
                                                 static_cast<uint64_t>(idx)));
      pairs.push_back(augment::make_view_pair(images[static_cast<size_t>(idx)], idx, rng, cfg));
      views.push_back(pairs.back().view_a);
      views.push_back(pairs.back().view_b);
    }
    Tensor batch = views_to_tensor(views);
    Tensor fmaps = state.query.backbone_forward(batch, nn::Mode::eval);
    for (int p = 0; p < pc; ++p) {
      Tensor f1 = slice3(fmaps, 2 * p);
      Tensor f2 = slice3(fmaps, 2 * p + 1);
      Tensor dummy;
      auto pred = matcher::extract_correspondence(matcher::MatchStrategy::max_sim_f, f1, f2,
                                                  dummy, dummy, grid_s, unused);
      auto gt = augment::ground_truth_correspondence(pairs[static_cast<size_t>(p)].geom_a,
                                                     pairs[static_cast<size_t>(p)].geom_b,
                                                     grid_s);
      for (int64_t i = 0; i < cells; ++i) {
        int g = gt[static_cast<size_t>(i)];
        if (g == augment::kInvalidCell) continue;
        ++evaluated;
        int pr = pred[static_cast<size_t>(i)];
        int gy = g / grid_s, gx = g % grid_s;
        int py = pr / grid_s, px = pr % grid_s;
        if (std::max(std::abs(gy - py), std::abs(gx - px)) <= 1) ++correct;
        if (pr == g) ++exact;
      }
    }
  }

  CorrEvalResult r;
  r.n_pairs = n_pairs;
  r.evaluated = evaluated;
  r.mean_valid = static_cast<double>(evaluated) / n_pairs;
  r.accuracy = evaluated > 0 ? static_cast<double>(correct) / evaluated : 0.0;
  r.exact_accuracy = evaluated > 0 ? static_cast<double>(exact) / evaluated : 0.0;
  return r;
}

Tensor embed_images(trainer::TrainState& state, const std::vector<Image>& images,
                    int out_size) {
  DCL_CHECK(!images.empty(), DataError, "embed_images: empty image set");
  const int64_t n = static_cast<int64_t>(images.size());
  const int64_t e = state.query.config().embed_dim;
  Tensor out({n, e});
  const int chunk = 64;
  for (int64_t i0 = 0; i0 < n; i0 += chunk) {
    int64_t ic = std::min<int64_t>(chunk, n - i0);
    std::vector<Image> views;
    for (int64_t i = 0; i < ic; ++i) {
      const Image& img = images[static_cast<size_t>(i0 + i)];
      augment::ViewGeometry g{0, 0, img.width(), img.height(), false, out_size};
      views.push_back(augment::resample_view(img, g));
    }
    Tensor batch = views_to_tensor(views);
    Tensor f = state.query.backbone_forward(batch, nn::Mode::eval);
    Tensor q = state.query.global_head(f, nn::Mode::eval);
    std::copy(q.data(), q.data() + ic * e, out.data() + i0 * e);
  }
  return out;
}

std::vector<int> knn_predict(trainer::TrainState& state, const data::Dataset& train_set,
                             const std::vector<Image>& test_images, int k, int out_size) {
  DCL_CHECK(train_set.labeled(), DataError, "knn: training set has no labels");
  DCL_CHECK(!test_images.empty(), DataError, "knn: empty test set");
  DCL_CHECK(k >= 1, ConfigError, "knn: k must be >= 1");
  DCL_CHECK(train_set.num_classes() >= 2, DataError,
            "knn: need at least 2 classes (degenerate single-class probe refused)");
  DCL_CHECK(k <= train_set.size(), DataError,
            "knn: k=" + std::to_string(k) + " exceeds the train set size " +
                std::to_string(train_set.size()));

  Tensor train_emb = embed_images(state, train_set.images, out_size);
  Tensor test_emb = embed_images(state, test_images, out_size);
  const int64_t nt = train_emb.dim(0), e = train_emb.dim(1), nq = test_emb.dim(0);

  Tensor sims({nq, nt});
  kernels::gemm_nt(nq, nt, e, test_emb.data(), train_emb.data(), sims.data(), false);

  std::vector<int> pred(static_cast<size_t>(nq));
  std::vector<int64_t> order(static_cast<size_t>(nt));
  for (int64_t q = 0; q < nq; ++q) {
    const float* row = sims.data() + q * nt;
    for (int64_t i = 0; i < nt; ++i) order[static_cast<size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
      if (row[a] != row[b]) return row[a] > row[b];
      return a < b;
    });
    std::map<int, int> votes;
    for (int i = 0; i < k && i < nt; ++i)
      votes[train_set.labels[static_cast<size_t>(order[static_cast<size_t>(i)])]]++;
    int best_cls = -1, best_votes = -1;
    for (auto& [cls, v] : votes) {
      if (v > best_votes) {  // map is class-ascending: ties keep the smaller id
        best_votes = v;
        best_cls = cls;
      }
    }
    pred[static_cast<size_t>(q)] = best_cls;
  }
  return pred;
}

double score_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  DCL_CHECK(predictions.size() == labels.size() && !labels.empty(), DataError,
            "score_accuracy: size mismatch");
  int64_t correct = 0;
  for (size_t i = 0; i < labels.size(); ++i)
    if (predictions[i] == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double knn_probe(trainer::TrainState& state, const data::Dataset& train_set,
                 const data::Dataset& test_set, int k, int out_size) {
  DCL_CHECK(test_set.labeled(), DataError, "knn: test set has no labels");
  auto pred = knn_predict(state, train_set, test_set.images, k, out_size);
  return score_accuracy(pred, test_set.labels);
}

namespace {

struct Rgb {
  float r, g, b;
};

// fixed 3-stop gradient over similarity in [-1,1]
Rgb sim_color(double sim) {
  const Rgb lo{0.15f, 0.25f, 0.9f}, mid{0.95f, 0.85f, 0.1f}, hi{0.9f, 0.1f, 0.1f};
  double t = (std::min(1.0, std::max(-1.0, sim)) + 1.0) / 2.0;
  auto lerp = [](const Rgb& a, const Rgb& b, double u) {
    return Rgb{static_cast<float>(a.r + (b.r - a.r) * u),
               static_cast<float>(a.g + (b.g - a.g) * u),
               static_cast<float>(a.b + (b.b - a.b) * u)};
  };
  return t < 0.5 ? lerp(lo, mid, t * 2.0) : lerp(mid, hi, (t - 0.5) * 2.0);
}

void draw_line(Image& img, int x0, int y0, int x1, int y1, const Rgb& c) {
  int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    if (x0 >= 0 && x0 < img.width() && y0 >= 0 && y0 < img.height()) {
      img.at(y0, x0, 0) = c.r;
      img.at(y0, x0, 1) = c.g;
      img.at(y0, x0, 2) = c.b;
    }
    if (x0 == x1 && y0 == y1) break;
    int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void paste_scaled(Image& dst, const Image& src, int ox, int oy, int scale) {
  for (int y = 0; y < src.height() * scale; ++y)
    for (int x = 0; x < src.width() * scale; ++x)
      for (int c = 0; c < 3; ++c)
        dst.at(oy + y, ox + x, c) = src.at(y / scale, x / scale, c);
}

}  // namespace

ExportResult export_matches(trainer::TrainState& state, const Image& image, double threshold,
                            uint64_t seed, const augment::AugmentConfig& aug) {
  augment::AugmentConfig cfg = geometric_only(aug);
  Rng rng(derive_seed(seed, kEvalTag, 3));
  auto pair = augment::make_view_pair(image, 0, rng, cfg);

  Tensor batch = views_to_tensor({pair.view_a, pair.view_b});
  Tensor fmaps = state.query.backbone_forward(batch, nn::Mode::eval);
  Tensor f1 = slice3(fmaps, 0);
  Tensor f2 = slice3(fmaps, 1);
  auto matches = matcher::mutual_matches(f1, f2, threshold);

  const int fw = static_cast<int>(f1.dim(2));
  const double stride = static_cast<double>(cfg.out_size) / fw;

  ExportResult res;
  for (const auto& m : matches) {
    MatchRecord r;
    r.cell_a = m.cell_a;
    r.cell_b = m.cell_b;
    r.similarity = m.similarity;
    r.ax = (m.cell_a % fw + 0.5) * stride - 0.5;
    r.ay = (m.cell_a / fw + 0.5) * stride - 0.5;
    r.bx = (m.cell_b % fw + 0.5) * stride - 0.5;
    r.by = (m.cell_b / fw + 0.5) * stride - 0.5;
    res.records.push_back(r);
  }

  constexpr int kScale = 4, kGap = 8;
  const int side = cfg.out_size * kScale;
  Image panel(side, 2 * side + kGap);
  for (int y = 0; y < panel.height(); ++y)
    for (int x = 0; x < panel.width(); ++x)
      for (int c = 0; c < 3; ++c) panel.at(y, x, c) = 0.08f;
  paste_scaled(panel, pair.view_a, 0, 0, kScale);
  paste_scaled(panel, pair.view_b, side + kGap, 0, kScale);
  for (const auto& r : res.records) {
    Rgb c = sim_color(r.similarity);
    int ax = static_cast<int>(std::lround((r.ax + 0.5) * kScale));
    int ay = static_cast<int>(std::lround((r.ay + 0.5) * kScale));
    int bx = static_cast<int>(std::lround((r.bx + 0.5) * kScale)) + side + kGap;
    int by = static_cast<int>(std::lround((r.by + 0.5) * kScale));
    draw_line(panel, ax, ay, bx, by, c);
  }
  res.panel = std::move(panel);
  return res;
}

void write_match_csv(const std::string& path, const std::vector<MatchRecord>& records) {
  std::ofstream f(path, std::ios::trunc);
  DCL_CHECK(f.good(), IoError, "cannot open '" + path + "' for writing");
  f << "cell_a,cell_b,sim,ax,ay,bx,by\n";
  for (const auto& r : records)
    f << r.cell_a << ',' << r.cell_b << ',' << r.similarity << ',' << r.ax << ',' << r.ay
      << ',' << r.bx << ',' << r.by << '\n';
  DCL_CHECK(f.good(), IoError, "write to '" + path + "' failed");
}

}  // namespace densecl::eval
