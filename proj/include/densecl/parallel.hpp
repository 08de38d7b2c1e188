// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <functional>

namespace densecl {

/// Number of compute workers. Resolution order: explicit set_worker_count,
/// DCL_THREADS env var, hardware concurrency. Always >= 1.
int worker_count();

/// Overrides the worker count (0 = back to auto). Takes effect on the next
/// parallel_for call; intended for config plumbing and tests.
void set_worker_count(int n);

/// Runs fn(worker, begin, end) over a static partition of [begin, end) into
/// worker_count contiguous chunks. The calling thread executes chunk 0, pool
/// threads the rest. The partition depends only on (range, worker count), so
/// any run with the same settings produces identical work assignment.
/// fn must not call parallel_for (no nesting).
void parallel_for(int64_t begin, int64_t end,
                  const std::function<void(int worker, int64_t b, int64_t e)>& fn);

/// Convenience element-wise form: fn(worker, index).
void parallel_for_each(int64_t begin, int64_t end,
                       const std::function<void(int worker, int64_t i)>& fn);

}  // namespace densecl
