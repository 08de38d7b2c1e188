// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "densecl/augment.hpp"
#include "densecl/dictionary.hpp"
#include "densecl/encoder.hpp"
#include "densecl/image.hpp"
#include "densecl/loss.hpp"
#include "densecl/matcher.hpp"
#include "densecl/tensor.hpp"

namespace densecl::trainer {

enum class NegativeMode { pooled, sampled };

NegativeMode parse_negative_mode(const std::string& s);
const char* negative_mode_name(NegativeMode m);

struct TrainConfig {
  double base_lr = 0.06;
  double sgd_momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 64;
  int epochs = 100;
  uint64_t seed = 1;
  int checkpoint_every = 10;  // epochs between checkpoints; 0 = final only
  bool save_queues = true;
  // Skips every dense computation (head, matching, dense loss, dense queue);
  // with lambda=0 the loss trajectory is identical to a run with the pathway
  // on, which the tests exploit.
  bool dense_pathway = true;
  // Averages the two optimization directions (a->b and b->a) per pair.
  bool symmetrize = false;

  loss::LossConfig loss;
  matcher::MatchStrategy match = matcher::MatchStrategy::max_sim_f;
  NegativeMode negative_mode = NegativeMode::pooled;
  nn::EncoderConfig encoder;
  int64_t global_queue_capacity = 4096;
  int64_t dense_queue_capacity = 4096;
  double momentum_m = 0.999;
  augment::AugmentConfig augment;

  void validate() const;
};

/// Everything a training run mutates: the two encoders, optimizer buffers,
/// the two key queues, and the step counter. All RNG streams are derived
/// from (seed, purpose, iteration, index), so the seed plus the iteration
/// count fully determine the remaining run.
struct TrainState {
  nn::Encoder<float> query;
  nn::Encoder<float> key;
  std::map<std::string, Tensor> sgd_buffers;
  dictionary::KeyQueue global_queue;
  dictionary::KeyQueue dense_queue;
  int64_t iteration = 0;
  uint64_t seed = 0;

  explicit TrainState(const TrainConfig& cfg);
};

struct Batch {
  Tensor views_a, views_b;  // [B,3,side,side]
  std::vector<augment::ViewGeometry> geom_a, geom_b;
  std::vector<int64_t> indices;
};

struct StepLog {
  int64_t iteration = 0;
  int epoch = 0;
  double lr = 0.0;
  loss::LossReport loss;
  double step_ms = 0.0;
};

struct EpochStats {
  int epoch = 0;
  double mean_global = 0.0, mean_dense = 0.0, mean_total = 0.0;
  double mean_step_ms = 0.0;
};

struct TrainResult {
  std::vector<StepLog> steps;
  std::vector<EpochStats> epochs;
};

double cosine_lr(int64_t iteration, int64_t total_iterations, double base_lr);

/// g <- grad + wd*param; buf <- mu*buf + g; param <- param - lr*buf, for every
/// learnable parameter. Buffers are looked up (and created zero) by name.
template <typename T>
void sgd_update(std::vector<nn::ParamRef<T>>& params,
                std::map<std::string, TensorT<T>>& buffers, double lr, double mu, double wd);

/// One optimization step. Throws NumericError on non-finite loss or
/// gradients, in which case state is left bitwise unchanged.
loss::LossReport train_step(TrainState& state, const Batch& batch, const TrainConfig& cfg,
                            double lr);

/// Builds the deterministic batch for a given iteration (shuffled per epoch,
/// ceil(n/batch) steps per epoch, final batch may be partial).
Batch make_batch(const std::vector<Image>& images, const TrainConfig& cfg,
                 int64_t iteration);

int64_t steps_per_epoch(int64_t n_images, int batch_size);

using EpochCallback = std::function<void(const EpochStats&)>;

/// Full pre-training loop with cosine LR decay, per-step metrics, periodic
/// checkpoints under out_dir (empty out_dir = no files). Batches are
/// prefetched by a worker thread ahead of the optimization thread.
TrainResult train(TrainState& state, const std::vector<Image>& images,
                  const TrainConfig& cfg, const std::string& out_dir,
                  const EpochCallback& on_epoch = nullptr);

/// Checkpoint IO (full state; queue contents included when save_queues).
void save_checkpoint(const TrainState& state, const TrainConfig& cfg,
                     const std::string& path, bool save_queues = true);

/// Restores a full TrainState; the checkpoint's grid size must match the
/// config or loading fails naming the dense head.
TrainState load_checkpoint(const std::string& path, const TrainConfig& cfg);

/// Loads backbone+head weights only into a fresh state: key encoder starts
/// as a copy of the query weights, queues empty, iteration 0.
TrainState load_weights_only(const std::string& path, const TrainConfig& cfg);

/// FNV-1a digest over query parameters (name order) — replay/resume checks.
uint64_t param_hash(TrainState& state);

/// Digest over the full mutable state (params, buffers, queues, iteration).
uint64_t state_digest(TrainState& state);

}  // namespace densecl::trainer
