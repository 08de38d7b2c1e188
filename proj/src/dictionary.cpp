// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#include "densecl/dictionary.hpp"

#include <cmath>
#include <cstring>

#include "densecl/common.hpp"
#include "densecl/kernels.hpp"

namespace densecl::dictionary {

KeyQueue::KeyQueue(int64_t capacity, int64_t dim)
    : buffer_({capacity, dim}), capacity_(capacity), dim_(dim) {
  DCL_CHECK(capacity >= 1 && dim >= 1, ConfigError, "key queue needs capacity, dim >= 1");
}

void KeyQueue::enqueue(const Tensor& keys) {
  DCL_CHECK(keys.rank() == 2 && keys.dim(1) == dim_, DataError,
            "enqueue: key dimensionality mismatch");
  const int64_t b = keys.dim(0);
  DCL_CHECK(b <= capacity_, DataError,
            "enqueue: batch of " + std::to_string(b) + " exceeds queue capacity " +
                std::to_string(capacity_));
  for (int64_t r = 0; r < b; ++r) {
    double norm = std::sqrt(static_cast<double>(kernels::sumsq(keys.data() + r * dim_, dim_)));
    DCL_CHECK(std::fabs(norm - 1.0) <= 1e-3, DataError,
              "enqueue: key row " + std::to_string(r) + " is not unit-norm (|k|=" +
                  std::to_string(norm) + ")");
  }
  for (int64_t r = 0; r < b; ++r) {
    std::memcpy(buffer_.data() + head_ * dim_, keys.data() + r * dim_,
                static_cast<size_t>(dim_) * sizeof(float));
    head_ = (head_ + 1) % capacity_;
  }
  size_ = std::min(capacity_, size_ + b);
}

Tensor KeyQueue::negatives_view() const {
  Tensor out({size_, dim_});
  int64_t oldest = (head_ - size_ + capacity_) % capacity_;
  for (int64_t r = 0; r < size_; ++r) {
    int64_t src = (oldest + r) % capacity_;
    std::memcpy(out.data() + r * dim_, buffer_.data() + src * dim_,
                static_cast<size_t>(dim_) * sizeof(float));
  }
  return out;
}

void KeyQueue::restore(Tensor buffer, int64_t head, int64_t size) {
  DCL_CHECK(buffer.rank() == 2, DataError, "queue restore: buffer must be [capacity,E]");
  capacity_ = buffer.dim(0);
  dim_ = buffer.dim(1);
  DCL_CHECK(head >= 0 && head < capacity_ && size >= 0 && size <= capacity_, DataError,
            "queue restore: inconsistent head/size");
  buffer_ = std::move(buffer);
  head_ = head;
  size_ = size;
}

template <typename T>
void momentum_update(std::vector<nn::ParamRef<T>>& key_params,
                     const std::vector<nn::ParamRef<T>>& query_params, double m) {
  DCL_CHECK(m >= 0.0 && m <= 1.0, ConfigError, "momentum m must lie in [0,1]");
  DCL_CHECK(key_params.size() == query_params.size(), DataError,
            "momentum_update: parameter collection size mismatch");
  for (size_t i = 0; i < key_params.size(); ++i) {
    auto& k = key_params[i];
    const auto& q = query_params[i];
    DCL_CHECK(k.name == q.name && k.value->same_shape(*q.value), DataError,
              "momentum_update: shape mismatch at parameter " + k.name);
    if (!k.learnable) continue;
    kernels::ema(k.value->numel(), k.value->data(), q.value->data(), static_cast<T>(m));
  }
}

template void momentum_update(std::vector<nn::ParamRef<float>>&,
                              const std::vector<nn::ParamRef<float>>&, double);
template void momentum_update(std::vector<nn::ParamRef<double>>&,
                              const std::vector<nn::ParamRef<double>>&, double);

}  // namespace densecl::dictionary
