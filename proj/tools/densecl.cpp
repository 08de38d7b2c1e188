// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "densecl/checkpoint.hpp"
#include "densecl/config.hpp"
#include "densecl/dataset.hpp"
#include "densecl/eval.hpp"
#include "densecl/image_io.hpp"
#include "densecl/kernels.hpp"
#include "densecl/parallel.hpp"
#include "densecl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace densecl;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::string data_dir;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool need_out) {
  cmd->add_option("--config", a.config_path, "flat key=value config file");
  cmd->add_option("--set", a.overrides, "config override key=value (repeatable)");
  auto* out = cmd->add_option("--out", a.out_dir, "output directory");
  if (need_out) out->required();
  cmd->add_option("--data", a.data_dir, "image folder (overrides data.dir)");
}

config::FullConfig resolve_config(const CommonArgs& a) {
  config::FullConfig cfg = config::parse_config(a.config_path, a.overrides);
  if (!a.data_dir.empty()) cfg.data_dir = a.data_dir;
  if (cfg.threads > 0) set_worker_count(cfg.threads);
  return cfg;
}

void write_effective_config(const config::FullConfig& cfg, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  std::ofstream f(out_dir + "/effective_config.txt", std::ios::trunc);
  DCL_CHECK(f.good(), IoError, "cannot write effective_config.txt under " + out_dir);
  f << config::dump_config(cfg);
  f << "# resolved kernel lane: " << kernels::lane_name(kernels::active_lane()) << "\n";
  f << "# resolved workers: " << worker_count() << "\n";
}

data::Dataset load_dataset(const config::FullConfig& cfg) {
  if (!cfg.data_dir.empty()) {
    data::Dataset ds = data::ingest_folder(cfg.data_dir);
    std::printf("dataset: %lld images from %s (%zu skipped)\n",
                static_cast<long long>(ds.size()), cfg.data_dir.c_str(), ds.skipped.size());
    return ds;
  }
  data::Dataset ds = data::generate_synthetic(cfg.synth);
  std::printf("dataset: %lld synthetic images, %d classes, %dpx\n",
              static_cast<long long>(ds.size()), cfg.synth.n_classes, cfg.synth.image_size);
  return ds;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream f(path, std::ios::trunc);
  DCL_CHECK(f.good(), IoError, "cannot write " + path);
  f << j.dump(2) << "\n";
}

int cmd_train(const CommonArgs& a, const std::string& resume, const std::string& warm_start) {
  config::FullConfig cfg = resolve_config(a);
  write_effective_config(cfg, a.out_dir);
  data::Dataset ds = load_dataset(cfg);

  trainer::TrainState state = [&]() {
    if (!resume.empty()) {
      std::printf("resuming from %s\n", resume.c_str());
      return trainer::load_checkpoint(resume, cfg.train);
    }
    if (!warm_start.empty()) {
      std::printf("warm-starting (weights only) from %s\n", warm_start.c_str());
      return trainer::load_weights_only(warm_start, cfg.train);
    }
    return trainer::TrainState(cfg.train);
  }();

  std::printf("training: %d epochs, batch %d, lr %.4g, lambda %.2f, S=%d, kernels=%s, workers=%d\n",
              cfg.train.epochs, cfg.train.batch_size, cfg.train.base_lr,
              cfg.train.loss.lambda, cfg.train.encoder.grid_size,
              kernels::lane_name(kernels::active_lane()), worker_count());

  trainer::train(state, ds.images, cfg.train, a.out_dir, [&](const trainer::EpochStats& es) {
    std::printf("epoch %4d  l_total %.4f  l_global %.4f  l_dense %.4f  %.0f ms/step\n",
                es.epoch, es.mean_total, es.mean_global, es.mean_dense, es.mean_step_ms);
    std::fflush(stdout);
  });
  std::printf("done; final checkpoint at %s/final.ckpt\n", a.out_dir.c_str());
  return 0;
}

int cmd_eval_corr(const CommonArgs& a, const std::string& ckpt) {
  config::FullConfig cfg = resolve_config(a);
  write_effective_config(cfg, a.out_dir);
  data::Dataset ds = load_dataset(cfg);
  trainer::TrainState state = trainer::load_weights_only(ckpt, cfg.train);

  auto r = eval::correspondence_accuracy(state, ds.images, cfg.train.encoder.grid_size,
                                         cfg.eval_n_pairs, cfg.eval_seed, cfg.train.augment,
                                         cfg.eval_photometric);
  std::printf("correspondence accuracy (within 1 cell): %.4f\n", r.accuracy);
  std::printf("exact-cell accuracy:                     %.4f\n", r.exact_accuracy);
  std::printf("mean valid queries per pair:             %.1f\n", r.mean_valid);
  std::printf("pairs evaluated:                         %d\n", r.n_pairs);

  json j{{"correspondence_accuracy", r.accuracy},
         {"exact_accuracy", r.exact_accuracy},
         {"mean_valid_matches", r.mean_valid},
         {"num_images", ds.size()},
         {"n_pairs", r.n_pairs}};
  write_json(a.out_dir + "/eval_corr.json", j);
  return 0;
}

int cmd_eval_knn(const CommonArgs& a, const std::string& ckpt) {
  config::FullConfig cfg = resolve_config(a);
  write_effective_config(cfg, a.out_dir);
  data::Dataset train_set = load_dataset(cfg);
  DCL_CHECK(train_set.labeled(), DataError,
            "eval-knn: dataset has no labels (labels.csv or synthetic data required)");

  data::Dataset test_set;
  if (cfg.data_dir.empty()) {
    data::SynthSpec test_spec = cfg.synth;
    test_spec.seed = cfg.synth.seed + 1000;
    test_spec.n_images = std::max(cfg.synth.n_classes * cfg.eval_knn_k, 400);
    test_set = data::generate_synthetic(test_spec);
  } else {
    // deterministic 80/20 split by position
    data::Dataset tr;
    for (int64_t i = 0; i < train_set.size(); ++i) {
      auto& dst = (i % 5 == 4) ? test_set : tr;
      dst.images.push_back(train_set.images[static_cast<size_t>(i)]);
      dst.labels.push_back(train_set.labels[static_cast<size_t>(i)]);
      dst.names.push_back(train_set.names[static_cast<size_t>(i)]);
    }
    train_set = std::move(tr);
  }

  trainer::TrainState state = trainer::load_weights_only(ckpt, cfg.train);
  double acc = eval::knn_probe(state, train_set, test_set, cfg.eval_knn_k,
                               cfg.train.augment.out_size);
  std::printf("knn probe accuracy (k=%d): %.4f  (train %lld / test %lld images)\n",
              cfg.eval_knn_k, acc, static_cast<long long>(train_set.size()),
              static_cast<long long>(test_set.size()));

  json j{{"knn_accuracy", acc},
         {"k", cfg.eval_knn_k},
         {"num_images", train_set.size() + test_set.size()}};
  write_json(a.out_dir + "/eval_knn.json", j);
  return 0;
}

int cmd_visualize(const CommonArgs& a, const std::string& ckpt, const std::string& image_path,
                  double threshold_flag, bool threshold_set) {
  config::FullConfig cfg = resolve_config(a);
  write_effective_config(cfg, a.out_dir);
  double threshold = threshold_set ? threshold_flag : cfg.vis_threshold;

  Image img = io::read_image(image_path);
  trainer::TrainState state = trainer::load_weights_only(ckpt, cfg.train);
  auto res = eval::export_matches(state, img, threshold, cfg.eval_seed, cfg.train.augment);

  std::string panel_path = a.out_dir + "/matches.png";
  io::write_image(panel_path, res.panel);
  eval::write_match_csv(a.out_dir + "/matches.csv", res.records);
  std::printf("%zu mutual matches at threshold %.3g\n", res.records.size(), threshold);
  std::printf("panel: %s\ntable: %s/matches.csv\n", panel_path.c_str(), a.out_dir.c_str());
  return 0;
}

int cmd_inspect(const std::string& ckpt) {
  checkpoint::Archive a = checkpoint::Archive::load(ckpt);
  std::printf("%-44s %-5s %s\n", "name", "dtype", "shape");
  for (const auto& [name, e] : a.entries()) {
    std::string shape = "[";
    for (size_t i = 0; i < e.dims.size(); ++i)
      shape += (i ? "," : "") + std::to_string(e.dims[i]);
    shape += "]";
    std::printf("%-44s %-5s %s\n", name.c_str(), checkpoint::dtype_name(e.dtype),
                shape.c_str());
  }
  std::printf("%zu tensors\n", a.entries().size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale dense contrastive pre-training"};
  app.require_subcommand(1);

  CommonArgs train_args, corr_args, knn_args, vis_args;
  std::string resume, warm_start, ckpt_corr, ckpt_knn, ckpt_vis, image_path, inspect_path;
  double threshold = 0.9;

  auto* t = app.add_subcommand("train", "pre-train the encoders");
  add_common(t, train_args, true);
  t->add_option("--resume", resume, "resume full state from a checkpoint");
  t->add_option("--warm-start", warm_start, "initialize weights from a checkpoint");

  auto* ec = app.add_subcommand("eval-corr", "grid correspondence accuracy vs ground truth");
  add_common(ec, corr_args, true);
  ec->add_option("--ckpt", ckpt_corr, "checkpoint to evaluate")->required();

  auto* ek = app.add_subcommand("eval-knn", "k-NN classification probe on global embeddings");
  add_common(ek, knn_args, true);
  ek->add_option("--ckpt", ckpt_knn, "checkpoint to evaluate")->required();

  auto* vz = app.add_subcommand("visualize", "export mutual-match panel and table");
  add_common(vz, vis_args, true);
  vz->add_option("--ckpt", ckpt_vis, "checkpoint to use")->required();
  vz->add_option("--image", image_path, "input image (.ppm/.png)")->required();
  auto* thr = vz->add_option("--threshold", threshold, "similarity threshold (-1 keeps all)");

  auto* in = app.add_subcommand("inspect", "list checkpoint tensors");
  in->add_option("ckpt", inspect_path, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // usage problems are config errors
  }

  try {
    if (t->parsed()) return cmd_train(train_args, resume, warm_start);
    if (ec->parsed()) return cmd_eval_corr(corr_args, ckpt_corr);
    if (ek->parsed()) return cmd_eval_knn(knn_args, ckpt_knn);
    if (vz->parsed()) return cmd_visualize(vis_args, ckpt_vis, image_path, threshold,
                                           thr->count() > 0);
    if (in->parsed()) return cmd_inspect(inspect_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
