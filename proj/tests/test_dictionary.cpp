// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <deque>

#include "densecl/dictionary.hpp"
#include "densecl/kernels.hpp"
#include "densecl/rng.hpp"

using namespace densecl;
using namespace densecl::dictionary;

namespace {

Tensor unit_rows_f(Rng& rng, int64_t n, int64_t d) {
  Tensor t({n, d});
  for (int64_t r = 0; r < n; ++r) {
    double norm = 0;
    for (int64_t i = 0; i < d; ++i) {
      t.at(r, i) = static_cast<float>(rng.uniform(-1.0, 1.0));
      norm += static_cast<double>(t.at(r, i)) * t.at(r, i);
    }
    float inv = static_cast<float>(1.0 / std::sqrt(norm));
    for (int64_t i = 0; i < d; ++i) t.at(r, i) *= inv;
  }
  return t;
}

Tensor marked_row(int64_t d, float mark) {
  Tensor t({1, d});
  t.at(0, 0) = mark >= 0 ? 1.0f : -1.0f;  // unit vector along e1, sign as a marker
  return t;
}

}  // namespace

TEST_CASE("enqueue keeps insertion order while below capacity") {
  Rng rng(51);
  KeyQueue q(8, 4);
  Tensor keys = unit_rows_f(rng, 3, 4);
  q.enqueue(keys);
  CHECK(q.size() == 3);
  Tensor got = q.negatives_view();
  REQUIRE(got.shape() == keys.shape());
  for (int64_t i = 0; i < keys.numel(); ++i) CHECK(got[i] == keys[i]);
}

TEST_CASE("full queue evicts the oldest entries first") {
  Rng rng(52);
  KeyQueue q(4, 3);
  Tensor first = unit_rows_f(rng, 4, 3);
  q.enqueue(first);
  Tensor more = unit_rows_f(rng, 2, 3);
  q.enqueue(more);
  CHECK(q.size() == 4);
  Tensor got = q.negatives_view();
  // expected: first[2], first[3], more[0], more[1]
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(got.at(0, i) == first.at(2, i));
    CHECK(got.at(1, i) == first.at(3, i));
    CHECK(got.at(2, i) == more.at(0, i));
    CHECK(got.at(3, i) == more.at(1, i));
  }
}

TEST_CASE("FIFO property over randomized enqueue sequences") {
  Rng rng(53);
  for (int rep = 0; rep < 20; ++rep) {
    int64_t cap = 1 + static_cast<int64_t>(rng.below(16));
    KeyQueue q(cap, 2);
    std::deque<std::pair<float, float>> model;
    for (int step = 0; step < 30; ++step) {
      int64_t b = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(cap)));
      Tensor keys = unit_rows_f(rng, b, 2);
      q.enqueue(keys);
      for (int64_t r = 0; r < b; ++r) {
        model.emplace_back(keys.at(r, 0), keys.at(r, 1));
        if (static_cast<int64_t>(model.size()) > cap) model.pop_front();
      }
      Tensor got = q.negatives_view();
      REQUIRE(got.dim(0) == static_cast<int64_t>(model.size()));
      for (int64_t r = 0; r < got.dim(0); ++r) {
        CHECK(got.at(r, 0) == model[static_cast<size_t>(r)].first);
        CHECK(got.at(r, 1) == model[static_cast<size_t>(r)].second);
      }
    }
  }
}

TEST_CASE("snapshots are unaffected by later enqueues") {
  Rng rng(54);
  KeyQueue q(8, 3);
  q.enqueue(unit_rows_f(rng, 4, 3));
  Tensor snap = q.negatives_view();
  Tensor copy = snap;
  q.enqueue(unit_rows_f(rng, 4, 3));
  for (int64_t i = 0; i < snap.numel(); ++i) CHECK(snap[i] == copy[i]);
  CHECK(q.negatives_view().dim(0) == 8);
}

TEST_CASE("empty queue yields an empty negative set") {
  KeyQueue q(4, 3);
  Tensor got = q.negatives_view();
  CHECK(got.dim(0) == 0);
}

TEST_CASE("non-normalized keys are rejected") {
  KeyQueue q(4, 3);
  Tensor bad({1, 3});
  bad.at(0, 0) = 1.1f;  // |k| = 1.1, off by > 1e-3
  CHECK_THROWS_AS(q.enqueue(bad), DataError);
  Tensor big({5, 3});
  CHECK_THROWS_AS(q.enqueue(big), DataError);  // batch exceeds capacity
}

TEST_CASE("two queues never share storage") {
  Rng rng(55);
  KeyQueue a(4, 3), b(4, 3);
  Tensor before = b.buffer();
  a.enqueue(unit_rows_f(rng, 3, 3));
  const Tensor& after = b.buffer();
  REQUIRE(before.numel() == after.numel());
  for (int64_t i = 0; i < before.numel(); ++i) CHECK(before[i] == after[i]);
  CHECK(b.size() == 0);
}

TEST_CASE("momentum update endpoints") {
  Tensor kv({2, 2}), qv({2, 2}), kg({2, 2}), qg({2, 2});
  kv.fill(3.0f);
  qv.fill(7.0f);
  std::vector<nn::ParamRef<float>> kp{{"w", &kv, &kg, true}};
  std::vector<nn::ParamRef<float>> qp{{"w", &qv, &qg, true}};

  momentum_update(kp, qp, 1.0);
  for (int64_t i = 0; i < 4; ++i) CHECK(kv[i] == 3.0f);  // m=1: unchanged
  momentum_update(kp, qp, 0.0);
  for (int64_t i = 0; i < 4; ++i) CHECK(kv[i] == 7.0f);  // m=0: copies query
}

TEST_CASE("momentum update contracts the gap geometrically") {
  Rng rng(56);
  Tensor kv({64}), qv({64});
  for (int64_t i = 0; i < 64; ++i) {
    kv[i] = static_cast<float>(rng.uniform(-1, 1));
    qv[i] = static_cast<float>(rng.uniform(-1, 1));
  }
  std::vector<nn::ParamRef<float>> kp{{"w", &kv, nullptr, true}};
  std::vector<nn::ParamRef<float>> qp{{"w", &qv, nullptr, true}};

  const double m = 0.999;
  auto gap = [&] {
    double s = 0;
    for (int64_t i = 0; i < 64; ++i)
      s += (static_cast<double>(kv[i]) - qv[i]) * (static_cast<double>(kv[i]) - qv[i]);
    return std::sqrt(s);
  };
  double prev = gap();
  for (int step = 0; step < 3; ++step) {
    momentum_update(kp, qp, m);
    double cur = gap();
    CHECK(cur / prev == doctest::Approx(m).epsilon(1e-5));
    prev = cur;
  }
}

TEST_CASE("momentum update rejects mismatched collections") {
  Tensor kv({2}), qv({3});
  std::vector<nn::ParamRef<float>> kp{{"w", &kv, nullptr, true}};
  std::vector<nn::ParamRef<float>> qp{{"w", &qv, nullptr, true}};
  CHECK_THROWS_AS(momentum_update(kp, qp, 0.5), DataError);
  CHECK_THROWS_AS(momentum_update(kp, kp, 1.5), ConfigError);
}

TEST_CASE("restore round-trips head and size") {
  Rng rng(57);
  KeyQueue q(4, 2);
  q.enqueue(unit_rows_f(rng, 3, 2));
  KeyQueue r;
  r.restore(q.buffer(), q.head(), q.size());
  Tensor a = q.negatives_view(), b = r.negatives_view();
  REQUIRE(a.shape() == b.shape());
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}
