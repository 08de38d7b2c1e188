// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#include "densecl/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace densecl {

namespace {

int env_threads() {
  const char* s = std::getenv("DCL_THREADS");
  if (!s) return 0;
  int v = std::atoi(s);
  return v > 0 ? v : 0;
}

std::atomic<int> g_override{0};
thread_local bool t_in_parallel = false;

// Lazy fork-join pool. Workers sleep between jobs; the submitting thread
// runs chunk 0 itself and then waits for the others.
class Pool {
 public:
  static Pool& instance() {
    static Pool p;
    return p;
  }

  void run(int nworkers, int64_t begin, int64_t end,
           const std::function<void(int, int64_t, int64_t)>& fn) {
    int64_t n = end - begin;
    if (n <= 0) return;
    if (nworkers > n) nworkers = static_cast<int>(n);
    // Nested calls (a worker re-entering parallel_for) run serially.
    if (nworkers <= 1 || t_in_parallel) {
      fn(0, begin, end);
      return;
    }
    t_in_parallel = true;
    struct Reset {
      ~Reset() { t_in_parallel = false; }
    } reset;
    ensure_threads(nworkers - 1);

    std::vector<std::pair<int64_t, int64_t>> chunks(static_cast<size_t>(nworkers));
    int64_t base = n / nworkers, rem = n % nworkers, pos = begin;
    for (int w = 0; w < nworkers; ++w) {
      int64_t len = base + (w < rem ? 1 : 0);
      chunks[static_cast<size_t>(w)] = {pos, pos + len};
      pos += len;
    }

    {
      std::unique_lock<std::mutex> lk(m_);
      job_fn_ = &fn;
      job_chunks_ = &chunks;
      pending_.store(nworkers - 1, std::memory_order_relaxed);
      ++generation_;
    }
    cv_.notify_all();

    fn(0, chunks[0].first, chunks[0].second);

    std::unique_lock<std::mutex> lk(m_);
    done_cv_.wait(lk, [&] { return pending_.load(std::memory_order_acquire) == 0; });
    job_fn_ = nullptr;
    job_chunks_ = nullptr;
  }

 private:
  Pool() = default;
  ~Pool() {
    {
      std::unique_lock<std::mutex> lk(m_);
      stop_ = true;
      ++generation_;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void ensure_threads(int n) {
    std::unique_lock<std::mutex> lk(m_);
    while (static_cast<int>(threads_.size()) < n) {
      int id = static_cast<int>(threads_.size()) + 1;
      threads_.emplace_back([this, id] { worker_loop(id); });
    }
  }

  void worker_loop(int id) {
    uint64_t seen = 0;
    for (;;) {
      const std::function<void(int, int64_t, int64_t)>* fn = nullptr;
      std::pair<int64_t, int64_t> chunk{0, 0};
      {
        std::unique_lock<std::mutex> lk(m_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        seen = generation_;
        if (stop_) return;
        if (!job_fn_ || id >= static_cast<int>(job_chunks_->size())) continue;
        fn = job_fn_;
        chunk = (*job_chunks_)[static_cast<size_t>(id)];
      }
      t_in_parallel = true;
      (*fn)(id, chunk.first, chunk.second);
      t_in_parallel = false;
      if (pending_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
        std::unique_lock<std::mutex> lk(m_);
        done_cv_.notify_all();
      }
    }
  }

  std::mutex m_;
  std::condition_variable cv_, done_cv_;
  std::vector<std::thread> threads_;
  const std::function<void(int, int64_t, int64_t)>* job_fn_ = nullptr;
  const std::vector<std::pair<int64_t, int64_t>>* job_chunks_ = nullptr;
  std::atomic<int> pending_{0};
  uint64_t generation_ = 0;
  bool stop_ = false;
};

}  // namespace

int worker_count() {
  int o = g_override.load(std::memory_order_relaxed);
  if (o > 0) return o;
  int e = env_threads();
  if (e > 0) return e;
  unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

void set_worker_count(int n) { g_override.store(n > 0 ? n : 0, std::memory_order_relaxed); }

void parallel_for(int64_t begin, int64_t end,
                  const std::function<void(int, int64_t, int64_t)>& fn) {
  Pool::instance().run(worker_count(), begin, end, fn);
}

void parallel_for_each(int64_t begin, int64_t end,
                       const std::function<void(int, int64_t)>& fn) {
  parallel_for(begin, end, [&fn](int w, int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) fn(w, i);
  });
}

}  // namespace densecl
