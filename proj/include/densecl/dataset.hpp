// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "densecl/image.hpp"

namespace densecl::data {

struct Dataset {
  std::vector<Image> images;
  std::vector<std::string> names;
  std::vector<int> labels;           // empty when unlabeled
  std::vector<std::string> skipped;  // undecodable files, for the report

  bool labeled() const { return !labels.empty(); }
  int64_t size() const { return static_cast<int64_t>(images.size()); }
  int num_classes() const;
};

struct SynthSpec {
  int n_images = 2000;
  int image_size = 64;
  int n_classes = 4;
  uint64_t seed = 1;

  void validate() const;
};

/// Decodes every .ppm/.png under data_dir in filename order. Corrupt files
/// are skipped with a warning and listed in the report. An optional
/// labels.csv ("filename,class" rows) makes the dataset labeled.
Dataset ingest_folder(const std::string& data_dir);

/// Deterministic synthetic dataset: per class a distinct arrangement of
/// colored shapes over a smooth value-noise background, so local features
/// are spatially distinctive and classes stay separable. Labels are
/// class = index % n_classes (balanced).
Dataset generate_synthetic(const SynthSpec& spec);

/// One synthetic image (exposed for the visualize command and tests).
Image synth_image(const SynthSpec& spec, int index);

}  // namespace densecl::data
