// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "densecl/encoder.hpp"
#include "densecl/kernels.hpp"
#include "oracles.hpp"

using namespace densecl;
using namespace densecl::nn;

namespace {

template <typename T>
TensorT<T> random_tensor(Rng& rng, std::vector<int64_t> shape, double lo = -1.0,
                         double hi = 1.0) {
  TensorT<T> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

EncoderConfig desk_encoder_cfg() {
  EncoderConfig cfg;  // channels 32-64-128-256, hidden 256, E 128, S 7
  return cfg;
}

EncoderConfig tiny_encoder_cfg() {
  EncoderConfig cfg;
  cfg.backbone.channels = {6, 8};
  cfg.hidden_dim = 12;
  cfg.embed_dim = 8;
  cfg.grid_size = 2;
  return cfg;
}

}  // namespace

TEST_CASE("backbone output spatial size is input/stride") {
  Encoder<float> enc(desk_encoder_cfg());
  enc.init(1);
  Rng rng(2);
  Tensor x = random_tensor<float>(rng, {2, 3, 64, 64}, 0.0, 1.0);
  Tensor f = enc.backbone_forward(x, Mode::eval);
  CHECK(f.shape() == std::vector<int64_t>{2, 256, 8, 8});
  CHECK(enc.stride() == 8);
}

TEST_CASE("non-square or indivisible inputs are rejected") {
  Encoder<float> enc(desk_encoder_cfg());
  enc.init(1);
  Tensor bad({1, 3, 60, 60});  // 60 not divisible by 8
  CHECK_THROWS_AS(enc.backbone_forward(bad, Mode::eval), DataError);
  Tensor rect({1, 3, 64, 32});
  CHECK_THROWS_AS(enc.backbone_forward(rect, Mode::eval), DataError);
}

TEST_CASE("batch order is preserved") {
  Encoder<float> enc(tiny_encoder_cfg());
  enc.init(3);
  Rng rng(4);
  Tensor a = random_tensor<float>(rng, {1, 3, 16, 16}, 0.0, 1.0);
  Tensor b = random_tensor<float>(rng, {1, 3, 16, 16}, 0.0, 1.0);
  Tensor both({2, 3, 16, 16});
  std::copy(a.data(), a.data() + a.numel(), both.data());
  std::copy(b.data(), b.data() + b.numel(), both.data() + a.numel());
  Tensor fa = enc.backbone_forward(a, Mode::eval);
  Tensor fb = enc.backbone_forward(b, Mode::eval);
  Tensor fboth = enc.backbone_forward(both, Mode::eval);
  for (int64_t i = 0; i < fa.numel(); ++i) {
    CHECK(fboth[i] == doctest::Approx(fa[i]).epsilon(1e-6));
    CHECK(fboth[fa.numel() + i] == doctest::Approx(fb[i]).epsilon(1e-6));
  }
}

TEST_CASE("global head: dimension, unit norm, permutation invariance") {
  Encoder<float> enc(desk_encoder_cfg());
  enc.init(5);
  Rng rng(6);
  Tensor f = random_tensor<float>(rng, {2, 256, 8, 8});
  Tensor q = enc.global_head(f, Mode::eval);
  CHECK(q.shape() == std::vector<int64_t>{2, 128});
  for (int64_t b = 0; b < 2; ++b) {
    double n = std::sqrt(static_cast<double>(kernels::sumsq(q.data() + b * 128, 128)));
    CHECK(n == doctest::Approx(1.0).epsilon(1e-5));
  }

  // spatial permutation leaves the pooled embedding unchanged
  Tensor fp = f;
  for (int64_t b = 0; b < 2; ++b)
    for (int64_t c = 0; c < 256; ++c) {
      float* plane = fp.data() + (b * 256 + c) * 64;
      std::reverse(plane, plane + 64);
    }
  Tensor qp = enc.global_head(fp, Mode::eval);
  for (int64_t i = 0; i < q.numel(); ++i) CHECK(qp[i] == doctest::Approx(q[i]).epsilon(1e-5));
}

TEST_CASE("dense head: S=1 gives the MLP of the global average") {
  Encoder<float> enc(tiny_encoder_cfg());
  enc.init(7);
  Rng rng(8);
  Tensor f = random_tensor<float>(rng, {1, 8, 4, 4});
  Tensor cells = enc.dense_head(f, 1, Mode::eval);
  CHECK(cells.shape() == std::vector<int64_t>{1, 1, 8});

  // spatially constant map: every grid cell embedding is identical
  Tensor fc({1, 8, 4, 4});
  for (int64_t c = 0; c < 8; ++c)
    for (int64_t i = 0; i < 16; ++i) fc.data()[c * 16 + i] = static_cast<float>(c) * 0.1f;
  Tensor cc = enc.dense_head(fc, 2, Mode::eval);
  for (int cell = 1; cell < 4; ++cell)
    for (int64_t e = 0; e < 8; ++e)
      CHECK(cc.at(0, cell, e) == doctest::Approx(cc.at(0, 0, e)).epsilon(1e-6));
}

TEST_CASE("dense head rejects grids larger than the feature map") {
  Encoder<float> enc(tiny_encoder_cfg());
  enc.init(9);
  Rng rng(10);
  Tensor f = random_tensor<float>(rng, {1, 8, 4, 4});
  CHECK_THROWS_AS(enc.dense_head(f, 5, Mode::eval), DataError);
}

TEST_CASE("head parameter counts are identical") {
  Encoder<float> enc(desk_encoder_cfg());
  CHECK(enc.global_head_param_count() == enc.dense_head_param_count());
  Encoder<float> tiny(tiny_encoder_cfg());
  CHECK(tiny.global_head_param_count() == tiny.dense_head_param_count());
}

TEST_CASE("dense head cells equal the global MLP under shared weights") {
  Encoder<float> enc(tiny_encoder_cfg());
  enc.init(11);
  // copy global MLP weights into the dense MLP
  std::map<std::string, Tensor*> by_name;
  for (auto& p : enc.params()) by_name[p.name] = p.value;
  for (const char* leaf : {"fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"})
    *by_name[std::string("dense.") + leaf] = *by_name[std::string("global.") + leaf];

  Rng rng(12);
  Tensor f = random_tensor<float>(rng, {2, 8, 4, 4});
  int s = 2;
  Tensor cells = enc.dense_head(f, s, Mode::eval);
  Tensor pooled = adaptive_avg_pool(f, s);
  for (int64_t b = 0; b < 2; ++b)
    for (int cell = 0; cell < s * s; ++cell) {
      // feed the pooled cell vector through the global head as a 1x1 map
      Tensor one({1, 8, 1, 1});
      for (int64_t c = 0; c < 8; ++c)
        one[c] = pooled.at(b, c, cell / s, cell % s);
      Tensor g = enc.global_head(one, Mode::eval);
      for (int64_t e = 0; e < 8; ++e)
        CHECK(cells.at(b, cell, e) == doctest::Approx(g[e]).epsilon(1e-5));
    }
}

TEST_CASE("adaptive pooling bin formula") {
  // identity when S == H
  Rng rng(13);
  Tensor x = random_tensor<float>(rng, {1, 2, 3, 3});
  Tensor y = adaptive_avg_pool(x, 3);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);

  // S=1 is the global mean
  Tensor m = adaptive_avg_pool(x, 1);
  for (int64_t c = 0; c < 2; ++c) {
    float want = kernels::sum(x.data() + c * 9, 9) / 9.0f;
    CHECK(m[c] == doctest::Approx(want).epsilon(1e-6));
  }

  // H=3, S=2: overlapping bins (x0,x1),(x1,x2) per axis
  Tensor col({1, 1, 3, 1});
  col[0] = 1.0f;
  col[1] = 5.0f;
  col[2] = 9.0f;
  Tensor p = adaptive_avg_pool(col, 1);  // sanity: mean 5
  CHECK(p[0] == doctest::Approx(5.0f));
  Tensor wide({1, 1, 3, 3});
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) wide.at(0, 0, r, c) = static_cast<float>(r);
  Tensor q = adaptive_avg_pool(wide, 2);
  CHECK(q.at(0, 0, 0, 0) == doctest::Approx(0.5f));  // mean(row0,row1)
  CHECK(q.at(0, 0, 1, 0) == doctest::Approx(1.5f));  // mean(row1,row2)

  CHECK_THROWS_AS(adaptive_avg_pool(x, 4), DataError);
}

TEST_CASE("adaptive pooling matches exhaustive per-bin summation") {
  Rng rng(14);
  for (int rep = 0; rep < 20; ++rep) {
    int h = 2 + static_cast<int>(rng.below(7));
    int w = 2 + static_cast<int>(rng.below(7));
    int s = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(std::min(h, w))));
    Tensor x = random_tensor<float>(rng, {1, 3, h, w});
    Tensor y = adaptive_avg_pool(x, s);
    for (int64_t c = 0; c < 3; ++c)
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j) {
          int y0 = (i * h) / s, y1 = ((i + 1) * h + s - 1) / s;
          int x0 = (j * w) / s, x1 = ((j + 1) * w + s - 1) / s;
          double acc = 0;
          for (int yy = y0; yy < y1; ++yy)
            for (int xx = x0; xx < x1; ++xx) acc += x.at(0, c, yy, xx);
          acc /= (y1 - y0) * (x1 - x0);
          CHECK(y.at(0, c, i, j) == doctest::Approx(acc).epsilon(1e-5));
        }
  }
}

TEST_CASE("pooled_dense_key") {
  // S=1: single cell comes back unchanged
  Tensor one({1, 4});
  one[0] = 0.6f;
  one[1] = 0.8f;
  auto k1 = pooled_dense_key(one);
  CHECK(k1[0] == doctest::Approx(0.6).epsilon(1e-6));
  CHECK(k1[1] == doctest::Approx(0.8).epsilon(1e-6));

  // all-equal cells give the shared vector back
  Tensor same({3, 2});
  for (int r = 0; r < 3; ++r) {
    same.at(r, 0) = 1.0f;
    same.at(r, 1) = 0.0f;
  }
  auto k2 = pooled_dense_key(same);
  CHECK(k2[0] == doctest::Approx(1.0));
  CHECK(k2[1] == doctest::Approx(0.0));

  // two orthonormal cells -> (e1+e2)/sqrt(2)
  Tensor ortho({2, 2});
  ortho.at(0, 0) = 1.0f;
  ortho.at(1, 1) = 1.0f;
  auto k3 = pooled_dense_key(ortho);
  CHECK(k3[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-6));
  CHECK(k3[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-6));

  // opposite cells cancel: degenerate mean
  Tensor deg({2, 2});
  deg.at(0, 0) = 1.0f;
  deg.at(1, 0) = -1.0f;
  CHECK_THROWS_AS(pooled_dense_key(deg), NumericError);
}

TEST_CASE("sampled_dense_key: determinism and uniformity") {
  Rng fill(15);
  Tensor cells = random_tensor<float>(fill, {49, 4});
  Rng r1(77), r2(77);
  auto a = sampled_dense_key(cells, r1);
  auto b = sampled_dense_key(cells, r2);
  CHECK(a == b);

  Tensor single({1, 3});
  single[0] = 1.0f;
  Rng r3(1);
  CHECK(sampled_dense_key(single, r3)[0] == 1.0f);

  // frequency within 4 sigma of uniform over 10^4 draws
  std::vector<int> counts(49, 0);
  Rng r4(9);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto v = sampled_dense_key(cells, r4);
    for (int c = 0; c < 49; ++c)
      if (v[0] == cells.at(c, 0) && v[1] == cells.at(c, 1)) {
        counts[static_cast<size_t>(c)]++;
        break;
      }
  }
  double p = 1.0 / 49.0, mean = n * p, sigma = std::sqrt(n * p * (1 - p));
  for (int c = 0; c < 49; ++c) {
    CHECK(counts[static_cast<size_t>(c)] >= mean - 4 * sigma);
    CHECK(counts[static_cast<size_t>(c)] <= mean + 4 * sigma);
  }
}

TEST_CASE("embeddings are unit-norm for random inputs") {
  Encoder<float> enc(tiny_encoder_cfg());
  enc.init(16);
  Rng rng(17);
  Tensor x = random_tensor<float>(rng, {3, 3, 16, 16}, 0.0, 1.0);
  Tensor f = enc.backbone_forward(x, Mode::eval);
  Tensor q = enc.global_head(f, Mode::eval);
  Tensor d = enc.dense_head(f, 2, Mode::eval);
  for (int64_t b = 0; b < 3; ++b) {
    CHECK(std::sqrt(static_cast<double>(kernels::sumsq(q.data() + b * 8, 8))) ==
          doctest::Approx(1.0).epsilon(1e-5));
    for (int cell = 0; cell < 4; ++cell) {
      const float* row = d.data() + (b * 4 + cell) * 8;
      CHECK(std::sqrt(static_cast<double>(kernels::sumsq(row, 8))) ==
            doctest::Approx(1.0).epsilon(1e-5));
    }
  }
}

// Analytic parameter gradients of sum(backbone(x)) vs central differences on
// a tiny two-conv backbone, in double precision. Instances whose ReLU
// pre-activations sit too close to the kink are redrawn (finite differences
// are meaningless across the kink).
TEST_CASE("backbone gradient check against finite differences") {
  const double h = 1e-5;
  int done = 0;
  for (uint64_t seed = 0; done < 3 && seed < 40; ++seed) {
    Conv3x3<double> conv1(3, 4, 1, false);
    BatchNorm2d<double> bn1(4);
    ReLU<double> relu1;
    Conv3x3<double> conv2(4, 5, 2, false);
    BatchNorm2d<double> bn2(5);
    ReLU<double> relu2;
    Rng rng(derive_seed(seed, 0xBB));
    conv1.init(rng);
    conv2.init(rng);
    TensorD x = random_tensor<double>(rng, {2, 3, 8, 8}, 0.0, 1.0);

    double margin = 1e300;
    auto forward = [&](bool cache, double* margin_out) {
      Mode m = cache ? Mode::train : Mode::key;
      TensorD t = conv1.forward(x, m);
      t = bn1.forward(t, m);
      if (margin_out)
        for (int64_t i = 0; i < t.numel(); ++i)
          *margin_out = std::min(*margin_out, std::fabs(t[i]));
      t = relu1.forward(t, m);
      t = conv2.forward(t, m);
      t = bn2.forward(t, m);
      if (margin_out)
        for (int64_t i = 0; i < t.numel(); ++i)
          *margin_out = std::min(*margin_out, std::fabs(t[i]));
      t = relu2.forward(t, m);
      double s = 0;
      for (int64_t i = 0; i < t.numel(); ++i) s += t[i];
      return s;
    };

    forward(false, &margin);
    if (margin < 1e-3) continue;  // kink too close, redraw
    ++done;

    // analytic gradients: d sum / d y = 1
    forward(true, nullptr);
    TensorD ones({2, 5, 4, 4});
    ones.fill(1.0);
    TensorD d = relu2.backward(ones);
    d = bn2.backward(d);
    d = conv2.backward(d);
    d = relu1.backward(d);
    d = bn1.backward(d);
    conv1.backward(d);

    std::vector<ParamRef<double>> params;
    conv1.collect_params("conv1", params);
    bn1.collect_params("bn1", params);
    conv2.collect_params("conv2", params);
    bn2.collect_params("bn2", params);

    for (auto& p : params) {
      if (!p.learnable) continue;
      double worst = 0, scale = 1e-12;
      for (int64_t i = 0; i < p.value->numel(); ++i) {
        double fd = oracles::central_diff((*p.value)[i], h,
                                          [&] { return forward(false, nullptr); });
        double an = (*p.grad)[i];
        worst = std::max(worst, std::fabs(fd - an));
        scale = std::max({scale, std::fabs(fd), std::fabs(an)});
      }
      CAPTURE(p.name);
      CHECK(worst / scale < 1e-3);
    }
  }
  CHECK(done == 3);
}
