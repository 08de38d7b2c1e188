// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "densecl/eval.hpp"
#include "densecl/image_io.hpp"

using namespace densecl;
using namespace densecl::eval;

namespace {

trainer::TrainConfig tiny_cfg() {
  trainer::TrainConfig cfg;
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

data::Dataset two_color_classes(int n, uint64_t seed) {
  // class 0: red-dominant noise; class 1: blue-dominant noise
  data::Dataset ds;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    int cls = i % 2;
    Image img(16, 16);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        float base = static_cast<float>(rng.uniform(0.0, 0.3));
        img.at(y, x, 0) = cls == 0 ? 0.6f + base : base;
        img.at(y, x, 1) = base;
        img.at(y, x, 2) = cls == 1 ? 0.6f + base : base;
      }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(cls);
    ds.names.push_back("img" + std::to_string(i));
  }
  return ds;
}

std::string tmp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("densecl_eval_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace

TEST_CASE("identical views give perfect correspondence accuracy") {
  trainer::TrainConfig cfg = tiny_cfg();
  // disable augmentation entirely: both views are the resized source
  cfg.augment.scale_min = cfg.augment.scale_max = 1.0;
  cfg.augment.flip_prob = 0.0;
  trainer::TrainState st(cfg);
  auto ds = two_color_classes(6, 11);
  auto r = correspondence_accuracy(st, ds.images, 2, 10, 42, cfg.augment);
  CHECK(r.accuracy == doctest::Approx(1.0));
  CHECK(r.exact_accuracy == doctest::Approx(1.0));
  CHECK(r.mean_valid == doctest::Approx(4.0));
}

TEST_CASE("correspondence accuracy is deterministic given the seed") {
  trainer::TrainConfig cfg = tiny_cfg();
  trainer::TrainState st(cfg);
  auto ds = two_color_classes(6, 12);
  auto a = correspondence_accuracy(st, ds.images, 2, 8, 7, cfg.augment);
  auto b = correspondence_accuracy(st, ds.images, 2, 8, 7, cfg.augment);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.exact_accuracy == b.exact_accuracy);
  CHECK(a.evaluated == b.evaluated);

  CHECK_THROWS_AS(correspondence_accuracy(st, {}, 2, 8, 7, cfg.augment), DataError);
}

TEST_CASE("knn: a duplicated test point with k=1 predicts its own label") {
  trainer::TrainConfig cfg = tiny_cfg();
  trainer::TrainState st(cfg);
  auto train_set = two_color_classes(8, 13);
  auto pred = knn_predict(st, train_set, {train_set.images[3]}, 1, 16);
  REQUIRE(pred.size() == 1);
  CHECK(pred[0] == train_set.labels[3]);
}

TEST_CASE("knn: k equal to the train size collapses to the majority class") {
  trainer::TrainConfig cfg = tiny_cfg();
  trainer::TrainState st(cfg);
  auto train_set = two_color_classes(8, 14);  // balanced: 4 + 4
  auto test_set = two_color_classes(10, 15);
  // all votes tie -> smallest class id (0) for every prediction
  auto pred = knn_predict(st, train_set, test_set.images, 8, 16);
  for (int p : pred) CHECK(p == 0);
  double acc = score_accuracy(pred, test_set.labels);
  CHECK(acc == doctest::Approx(0.5));  // 1/num_classes on a balanced test set
}

TEST_CASE("knn input validation") {
  trainer::TrainConfig cfg = tiny_cfg();
  trainer::TrainState st(cfg);
  auto train_set = two_color_classes(8, 16);
  CHECK_THROWS_AS(knn_predict(st, train_set, {}, 1, 16), DataError);
  CHECK_THROWS_AS(knn_predict(st, train_set, {train_set.images[0]}, 9, 16), DataError);

  data::Dataset single;  // one class only: probe refused
  single.images = train_set.images;
  single.labels.assign(train_set.images.size(), 0);
  CHECK_THROWS_AS(knn_predict(st, single, {train_set.images[0]}, 1, 16), DataError);

  data::Dataset unlabeled;
  unlabeled.images = train_set.images;
  CHECK_THROWS_AS(knn_predict(st, unlabeled, {train_set.images[0]}, 1, 16), DataError);
}

TEST_CASE("a briefly trained encoder beats chance on two separated classes") {
  trainer::TrainConfig cfg = tiny_cfg();
  cfg.epochs = 6;
  auto train_set = two_color_classes(16, 17);
  trainer::TrainState st(cfg);
  trainer::train(st, train_set.images, cfg, "");

  auto test_set = two_color_classes(40, 18);
  double acc = knn_probe(st, train_set, test_set, 3, 16);
  // binomial chance bound: 0.5 + 3*sqrt(0.25/40) ~ 0.737
  CHECK(acc > 0.5 + 3.0 * std::sqrt(0.25 / 40.0));
}

TEST_CASE("export_matches: records and rendered lines stay 1:1") {
  trainer::TrainConfig cfg = tiny_cfg();
  trainer::TrainState st(cfg);
  auto ds = two_color_classes(2, 19);

  auto all = export_matches(st, ds.images[0], -1.0, 5, cfg.augment);
  // feature map is 8x8 = 64 cells; mutual matches can't exceed that
  CHECK(all.records.size() <= 64);
  CHECK(!all.records.empty());
  CHECK(all.panel.width() == 2 * 16 * 4 + 8);
  CHECK(all.panel.height() == 16 * 4);

  auto none = export_matches(st, ds.images[0], 1.0 + 1e-9, 5, cfg.augment);
  CHECK(none.records.empty());

  std::string dir = tmp_dir("export");
  write_match_csv(dir + "/m.csv", all.records);
  std::ifstream f(dir + "/m.csv");
  std::string line;
  std::getline(f, line);
  CHECK(line == "cell_a,cell_b,sim,ax,ay,bx,by");
  size_t rows = 0;
  while (std::getline(f, line))
    if (!line.empty()) ++rows;
  CHECK(rows == all.records.size());

  // empty table still carries the header
  write_match_csv(dir + "/empty.csv", none.records);
  std::ifstream fe(dir + "/empty.csv");
  std::getline(fe, line);
  CHECK(line == "cell_a,cell_b,sim,ax,ay,bx,by");
  CHECK(!std::getline(fe, line));

  // panel is writable as both ppm and png
  io::write_image(dir + "/panel.ppm", all.panel);
  io::write_image(dir + "/panel.png", all.panel);
  Image round = io::read_png(dir + "/panel.png");
  CHECK(round.width() == all.panel.width());
  CHECK(round.height() == all.panel.height());
}

TEST_CASE("threshold keeps only sufficiently similar matches") {
  trainer::TrainConfig cfg = tiny_cfg();
  trainer::TrainState st(cfg);
  auto ds = two_color_classes(2, 20);
  auto all = export_matches(st, ds.images[0], -1.0, 5, cfg.augment);
  auto strict = export_matches(st, ds.images[0], 0.9, 5, cfg.augment);
  CHECK(strict.records.size() <= all.records.size());
  for (const auto& r : strict.records) CHECK(r.similarity >= 0.9);
}
