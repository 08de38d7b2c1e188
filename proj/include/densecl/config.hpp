// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <string>
#include <vector>

#include "densecl/dataset.hpp"
#include "densecl/trainer.hpp"

namespace densecl::config {

/// Everything a run needs, resolved from defaults + config file + overrides.
struct FullConfig {
  std::string data_dir;  // empty -> synthetic dataset
  data::SynthSpec synth;
  trainer::TrainConfig train;

  int eval_n_pairs = 200;
  int eval_knn_k = 10;
  uint64_t eval_seed = 7;
  bool eval_photometric = false;
  double vis_threshold = 0.9;
  int threads = 0;  // 0 = auto (DCL_THREADS or hardware)
};

/// Parses a flat "key = value" file ('#' comments), then applies "key=value"
/// overrides in order. Unknown keys, type mismatches and out-of-range values
/// are rejected with the key and the accepted range in the message.
/// An empty path yields pure defaults.
FullConfig parse_config(const std::string& path, const std::vector<std::string>& overrides);

/// All resolved keys as a re-parseable "key = value" listing.
std::string dump_config(const FullConfig& cfg);

void validate(const FullConfig& cfg);

}  // namespace densecl::config
