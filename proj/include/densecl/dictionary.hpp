// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>

#include "densecl/encoder.hpp"
#include "densecl/tensor.hpp"

namespace densecl::dictionary {

/// Fixed-capacity FIFO ring of unit-norm key vectors. Starts empty; once
/// full, enqueues evict the oldest entries. The global and dense losses each
/// own an independent instance.
class KeyQueue {
 public:
  KeyQueue() = default;
  KeyQueue(int64_t capacity, int64_t dim);

  /// Appends rows of keys [B,E] in order. B must not exceed capacity and
  /// every row must be unit-norm within 1e-3.
  void enqueue(const Tensor& keys);

  /// Snapshot of current contents, oldest first [size,E]. Later enqueues do
  /// not affect a snapshot already taken.
  Tensor negatives_view() const;

  int64_t size() const { return size_; }
  int64_t capacity() const { return capacity_; }
  int64_t dim() const { return dim_; }

  // checkpoint access
  const Tensor& buffer() const { return buffer_; }
  int64_t head() const { return head_; }
  void restore(Tensor buffer, int64_t head, int64_t size);

 private:
  Tensor buffer_;
  int64_t capacity_ = 0, dim_ = 0;
  int64_t head_ = 0;  // next write slot
  int64_t size_ = 0;
};

struct MomentumConfig {
  double m = 0.999;
};

/// key <- m*key + (1-m)*query, elementwise over learnable parameters.
/// Collections must match in order, name and shape.
template <typename T>
void momentum_update(std::vector<nn::ParamRef<T>>& key_params,
                     const std::vector<nn::ParamRef<T>>& query_params, double m);

}  // namespace densecl::dictionary
