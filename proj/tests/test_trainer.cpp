// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "densecl/checkpoint.hpp"
#include "densecl/dataset.hpp"
#include "densecl/kernels.hpp"
#include "densecl/trainer.hpp"

using namespace densecl;
using namespace densecl::trainer;

namespace {

TrainConfig tiny_cfg() {
  TrainConfig cfg;
  cfg.encoder.backbone.channels = {6, 8};
  cfg.encoder.hidden_dim = 12;
  cfg.encoder.embed_dim = 8;
  cfg.encoder.grid_size = 2;
  cfg.augment.out_size = 16;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.global_queue_capacity = 32;
  cfg.dense_queue_capacity = 32;
  cfg.base_lr = 0.05;
  cfg.seed = 3;
  cfg.checkpoint_every = 0;
  return cfg;
}

std::vector<Image> tiny_images(int n = 8, int size = 16) {
  data::SynthSpec spec;
  spec.n_images = n;
  spec.image_size = size;
  spec.n_classes = 2;
  spec.seed = 5;
  return data::generate_synthetic(spec).images;
}

std::string tmp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("densecl_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

bool same_file_bytes(const std::string& a, const std::string& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  return !sa.empty() && sa == sb;
}

}  // namespace

TEST_CASE("cosine schedule endpoints") {
  CHECK(cosine_lr(0, 100, 0.3) == doctest::Approx(0.3));
  CHECK(cosine_lr(100, 100, 0.3) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine_lr(50, 100, 0.3) == doctest::Approx(0.15));
  CHECK_THROWS_AS(cosine_lr(101, 100, 0.3), ConfigError);
}

TEST_CASE("sgd_update: zero gradients with zero decay leave parameters unchanged") {
  Tensor w({3}), g({3});
  w.fill(2.0f);
  std::vector<nn::ParamRef<float>> params{{"w", &w, &g, true}};
  std::map<std::string, Tensor> bufs;
  sgd_update(params, bufs, 0.1, 0.9, 0.0);
  for (int64_t i = 0; i < 3; ++i) CHECK(w[i] == 2.0f);
}

TEST_CASE("sgd_update matches the hand-evaluated recurrence") {
  Tensor w({1}), g({1});
  w[0] = 1.0f;
  g[0] = 1.0f;
  std::vector<nn::ParamRef<float>> params{{"w", &w, &g, true}};
  std::map<std::string, Tensor> bufs;
  sgd_update(params, bufs, 0.1, 0.9, 1e-4);
  CHECK(bufs.at("w")[0] == doctest::Approx(1.0001).epsilon(1e-6));
  CHECK(w[0] == doctest::Approx(0.89999).epsilon(1e-6));
}

TEST_CASE("config validation catches the documented mistakes") {
  TrainConfig cfg = tiny_cfg();
  CHECK_NOTHROW(cfg.validate());
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_cfg();
  cfg.batch_size = 64;  // exceeds capacity 32
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_cfg();
  cfg.augment.out_size = 18;  // not divisible by stride 2... it is; use 17
  cfg.augment.out_size = 17;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("lambda=0 leaves dense-head gradients exactly zero") {
  TrainConfig cfg = tiny_cfg();
  cfg.loss.lambda = 0.0;
  auto images = tiny_images();
  TrainState st(cfg);
  Batch b = make_batch(images, cfg, 0);
  train_step(st, b, cfg, 0.05);
  for (auto& p : st.query.params()) {
    if (!p.grad || p.name.rfind("dense.", 0) != 0) continue;
    for (int64_t i = 0; i < p.grad->numel(); ++i) CHECK(p.grad->data()[i] == 0.0f);
  }
}

TEST_CASE("repeating one batch drives the loss down") {
  TrainConfig cfg = tiny_cfg();
  cfg.global_queue_capacity = 8;  // full after two steps
  cfg.dense_queue_capacity = 8;
  auto images = tiny_images();
  TrainState st(cfg);
  Batch b = make_batch(images, cfg, 0);
  // the queues start empty (step 1 has no negatives), so compare from the
  // first full-queue step onward
  train_step(st, b, cfg, 0.05);
  train_step(st, b, cfg, 0.05);
  double first = train_step(st, b, cfg, 0.05).l_total;
  double last = 0;
  for (int step = 0; step < 9; ++step) last = train_step(st, b, cfg, 0.05).l_total;
  CHECK(last < first);
}

TEST_CASE("identical seeds give identical parameter hashes") {
  TrainConfig cfg = tiny_cfg();
  auto images = tiny_images();
  TrainState s1(cfg), s2(cfg);
  train(s1, images, cfg, "");
  train(s2, images, cfg, "");
  CHECK(param_hash(s1) == param_hash(s2));
}

TEST_CASE("key encoder replays as an EMA of the query history") {
  TrainConfig cfg = tiny_cfg();
  cfg.epochs = 1;
  auto images = tiny_images();
  TrainState st(cfg);

  // record query params after init and after every step
  std::vector<std::vector<Tensor>> history;
  auto snapshot = [&](nn::Encoder<float>& e) {
    std::vector<Tensor> snap;
    for (auto& p : e.params())
      if (p.learnable) snap.push_back(*p.value);
    return snap;
  };
  history.push_back(snapshot(st.query));
  for (int64_t it = 0; it < 5; ++it) {
    Batch b = make_batch(images, cfg, it % 2);
    train_step(st, b, cfg, 0.05);
    history.push_back(snapshot(st.query));
  }

  // replay: key starts equal to query init, then one EMA per recorded step
  // (same primitive, so the comparison is bitwise)
  std::vector<Tensor> replay = history[0];
  const float m = static_cast<float>(cfg.momentum_m);
  for (size_t step = 1; step < history.size(); ++step)
    for (size_t p = 0; p < replay.size(); ++p)
      kernels::ema(replay[p].numel(), replay[p].data(), history[step][p].data(), m);

  size_t pi = 0;
  for (auto& p : st.key.params()) {
    if (!p.learnable) continue;
    for (int64_t i = 0; i < p.value->numel(); ++i)
      CHECK(p.value->data()[i] == replay[pi][i]);  // bitwise
    ++pi;
  }
}

TEST_CASE("a failing step leaves the state bitwise unchanged") {
  TrainConfig cfg = tiny_cfg();
  auto images = tiny_images();
  TrainState st(cfg);
  Batch good = make_batch(images, cfg, 0);
  train_step(st, good, cfg, 0.05);

  uint64_t before = state_digest(st);
  Batch bad = make_batch(images, cfg, 1);
  bad.views_a[0] = std::nanf("");
  CHECK_THROWS_AS(train_step(st, bad, cfg, 0.05), NumericError);
  CHECK(state_digest(st) == before);
  CHECK(st.iteration == 1);
}

TEST_CASE("checkpoint save/load/save is byte-identical") {
  TrainConfig cfg = tiny_cfg();
  auto images = tiny_images();
  TrainState st(cfg);
  for (int64_t it = 0; it < 3; ++it) train_step(st, make_batch(images, cfg, it), cfg, 0.05);

  std::string dir = tmp_dir("ckpt_rt");
  save_checkpoint(st, cfg, dir + "/a.ckpt");
  TrainState loaded = load_checkpoint(dir + "/a.ckpt", cfg);
  save_checkpoint(loaded, cfg, dir + "/b.ckpt");
  CHECK(same_file_bytes(dir + "/a.ckpt", dir + "/b.ckpt"));
  CHECK(state_digest(loaded) == state_digest(st));
}

TEST_CASE("loading with a mismatched grid size names the dense head") {
  TrainConfig cfg = tiny_cfg();
  auto images = tiny_images();
  TrainState st(cfg);
  std::string dir = tmp_dir("ckpt_grid");
  save_checkpoint(st, cfg, dir + "/s2.ckpt");

  TrainConfig other = cfg;
  other.encoder.grid_size = 4;
  try {
    load_checkpoint(dir + "/s2.ckpt", other);
    FAIL("expected a grid size error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("dense head") != std::string::npos);
  }
}

TEST_CASE("weights-only load: fresh queues, key mirrors query") {
  TrainConfig cfg = tiny_cfg();
  auto images = tiny_images();
  TrainState st(cfg);
  for (int64_t it = 0; it < 3; ++it) train_step(st, make_batch(images, cfg, it), cfg, 0.05);
  std::string dir = tmp_dir("ckpt_warm");
  save_checkpoint(st, cfg, dir + "/w.ckpt");

  TrainState warm = load_weights_only(dir + "/w.ckpt", cfg);
  CHECK(warm.iteration == 0);
  CHECK(warm.global_queue.size() == 0);
  CHECK(warm.dense_queue.size() == 0);
  CHECK(warm.sgd_buffers.empty());
  // query weights came from the checkpoint, key mirrors them
  auto qp = warm.query.params();
  auto kp = warm.key.params();
  auto sp = st.query.params();
  for (size_t i = 0; i < qp.size(); ++i) {
    for (int64_t j = 0; j < qp[i].value->numel(); ++j) {
      CHECK(qp[i].value->data()[j] == sp[i].value->data()[j]);
      CHECK(kp[i].value->data()[j] == qp[i].value->data()[j]);
    }
  }
}

TEST_CASE("resumed training reproduces the uninterrupted run") {
  TrainConfig cfg = tiny_cfg();
  cfg.epochs = 4;  // 2 steps/epoch * 4 = 8 steps total
  auto images = tiny_images();

  TrainState full(cfg);
  train(full, images, cfg, "");

  std::string dir = tmp_dir("resume");
  TrainState half(cfg);
  // run the first half manually, save, reload, finish via train()
  const int64_t spe = steps_per_epoch(static_cast<int64_t>(images.size()), cfg.batch_size);
  const int64_t total = spe * cfg.epochs;
  for (int64_t it = 0; it < total / 2; ++it)
    train_step(half, make_batch(images, cfg, it), cfg, cosine_lr(it, total, cfg.base_lr));
  save_checkpoint(half, cfg, dir + "/half.ckpt");

  TrainState resumed = load_checkpoint(dir + "/half.ckpt", cfg);
  train(resumed, images, cfg, "");
  CHECK(param_hash(resumed) == param_hash(full));
  CHECK(state_digest(resumed) == state_digest(full));
}

TEST_CASE("train writes metrics and the final checkpoint") {
  TrainConfig cfg = tiny_cfg();
  cfg.epochs = 1;
  auto images = tiny_images();
  std::string dir = tmp_dir("artifacts");
  TrainState st(cfg);
  auto res = train(st, images, cfg, dir);
  CHECK(std::filesystem::exists(dir + "/metrics.csv"));
  CHECK(std::filesystem::exists(dir + "/final.ckpt"));
  CHECK(res.steps.size() == 2);
  CHECK(res.epochs.size() == 1);
  for (auto& s : res.steps) CHECK(std::isfinite(s.loss.l_total));

  std::ifstream mf(dir + "/metrics.csv");
  std::string header;
  std::getline(mf, header);
  CHECK(header == "iteration,epoch,lr,l_global,l_dense,l_total,step_ms");
}

TEST_CASE("negative mode parsing") {
  CHECK(parse_negative_mode("pooled") == NegativeMode::pooled);
  CHECK(parse_negative_mode("sampled") == NegativeMode::sampled);
  CHECK_THROWS_AS(parse_negative_mode("x"), ConfigError);
}

TEST_CASE("sampled negative mode trains and stays deterministic") {
  TrainConfig cfg = tiny_cfg();
  cfg.negative_mode = NegativeMode::sampled;
  cfg.epochs = 1;
  auto images = tiny_images();
  TrainState s1(cfg), s2(cfg);
  train(s1, images, cfg, "");
  train(s2, images, cfg, "");
  CHECK(param_hash(s1) == param_hash(s2));
}

TEST_CASE("symmetrized direction trains") {
  TrainConfig cfg = tiny_cfg();
  cfg.symmetrize = true;
  cfg.epochs = 1;
  auto images = tiny_images();
  TrainState st(cfg);
  auto res = train(st, images, cfg, "");
  for (auto& s : res.steps) CHECK(std::isfinite(s.loss.l_total));
  CHECK(st.global_queue.size() == 2 * 2 * cfg.batch_size);  // both directions enqueued
}
