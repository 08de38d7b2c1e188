// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#include "densecl/trainer.hpp"

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <queue>
#include <thread>

#include "densecl/checkpoint.hpp"
#include "densecl/common.hpp"
#include "densecl/kernels.hpp"

namespace densecl::trainer {

namespace {

// RNG stream purposes
constexpr uint64_t kAugTag = 0xA06;
constexpr uint64_t kShuffleTag = 0x51F;
constexpr uint64_t kMatchTag = 0x3A7C;
constexpr uint64_t kDenseKeyTag = 0x5AB7;

using Clock = std::chrono::steady_clock;

template <typename T>
TensorT<T> slice_fmap(const TensorT<T>& f, int64_t b) {
  const int64_t c = f.dim(1), h = f.dim(2), w = f.dim(3);
  TensorT<T> out({c, h, w});
  std::copy(f.data() + b * c * h * w, f.data() + (b + 1) * c * h * w, out.data());
  return out;
}

template <typename T>
TensorT<T> slice_cells(const TensorT<T>& t, int64_t b) {
  const int64_t cells = t.dim(1), e = t.dim(2);
  TensorT<T> out({cells, e});
  std::copy(t.data() + b * cells * e, t.data() + (b + 1) * cells * e, out.data());
  return out;
}

void check_grads_finite(nn::Encoder<float>& enc) {
  for (auto& p : enc.params()) {
    if (!p.grad) continue;
    const float* g = p.grad->data();
    for (int64_t i = 0; i < p.grad->numel(); ++i)
      DCL_CHECK(std::isfinite(g[i]), NumericError,
                "train_step: non-finite gradient in " + p.name);
  }
}

uint64_t fnv1a(uint64_t h, const void* data, size_t n) {
  const auto* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr uint64_t kFnvBasis = 0xcbf29ce484222325ULL;

}  // namespace

NegativeMode parse_negative_mode(const std::string& s) {
  if (s == "pooled") return NegativeMode::pooled;
  if (s == "sampled") return NegativeMode::sampled;
  throw ConfigError("dict.negative_mode: unknown value '" + s + "' (expected pooled|sampled)");
}

const char* negative_mode_name(NegativeMode m) {
  return m == NegativeMode::pooled ? "pooled" : "sampled";
}

void TrainConfig::validate() const {
  DCL_CHECK(epochs >= 1, ConfigError, "train.epochs must be >= 1");
  DCL_CHECK(batch_size >= 1, ConfigError, "train.batch_size must be >= 1");
  DCL_CHECK(base_lr > 0.0, ConfigError, "train.base_lr must be > 0");
  DCL_CHECK(sgd_momentum >= 0.0 && sgd_momentum < 1.0, ConfigError,
            "train.sgd_momentum must lie in [0,1)");
  DCL_CHECK(weight_decay >= 0.0, ConfigError, "train.weight_decay must be >= 0");
  DCL_CHECK(checkpoint_every >= 0, ConfigError, "train.checkpoint_every must be >= 0");
  DCL_CHECK(momentum_m >= 0.0 && momentum_m <= 1.0, ConfigError,
            "dict.momentum must lie in [0,1]");
  DCL_CHECK(global_queue_capacity >= 1 && dense_queue_capacity >= 1, ConfigError,
            "queue capacities must be >= 1");
  DCL_CHECK(batch_size <= global_queue_capacity && batch_size <= dense_queue_capacity,
            ConfigError, "train.batch_size must not exceed the queue capacities");
  loss.validate();
  int stride = 1;
  for (size_t i = 1; i < encoder.backbone.channels.size(); ++i) stride *= 2;
  DCL_CHECK(augment.out_size % stride == 0, ConfigError,
            "augment.out_size must be divisible by the backbone stride " +
                std::to_string(stride));
  DCL_CHECK(encoder.grid_size <= augment.out_size / stride, ConfigError,
            "model.grid_size exceeds the backbone feature map size " +
                std::to_string(augment.out_size / stride));
}

TrainState::TrainState(const TrainConfig& cfg)
    : query(cfg.encoder),
      key(cfg.encoder),
      global_queue(cfg.global_queue_capacity, cfg.encoder.embed_dim),
      dense_queue(cfg.dense_queue_capacity, cfg.encoder.embed_dim),
      seed(cfg.seed) {
  query.init(cfg.seed);
  auto qp = query.params();
  auto kp = key.params();
  for (size_t i = 0; i < qp.size(); ++i) *kp[i].value = *qp[i].value;
}

double cosine_lr(int64_t iteration, int64_t total_iterations, double base_lr) {
  DCL_CHECK(total_iterations >= 1 && iteration >= 0 && iteration <= total_iterations,
            ConfigError, "cosine_lr: iteration out of range");
  return base_lr * 0.5 *
         (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(iteration) /
                         static_cast<double>(total_iterations)));
}

template <typename T>
void sgd_update(std::vector<nn::ParamRef<T>>& params,
                std::map<std::string, TensorT<T>>& buffers, double lr, double mu, double wd) {
  for (auto& p : params) {
    if (!p.learnable) continue;
    DCL_CHECK(p.grad && p.grad->same_shape(*p.value), DataError,
              "sgd_update: missing or mismatched gradient for " + p.name);
    auto it = buffers.find(p.name);
    if (it == buffers.end()) it = buffers.emplace(p.name, TensorT<T>(p.value->shape())).first;
    DCL_CHECK(it->second.same_shape(*p.value), DataError,
              "sgd_update: momentum buffer shape mismatch for " + p.name);
    kernels::sgd_step(p.value->numel(), p.value->data(), p.grad->data(), it->second.data(),
                      static_cast<T>(lr), static_cast<T>(mu), static_cast<T>(wd));
  }
}

template void sgd_update(std::vector<nn::ParamRef<float>>&, std::map<std::string, Tensor>&,
                         double, double, double);
template void sgd_update(std::vector<nn::ParamRef<double>>&,
                         std::map<std::string, TensorD>&, double, double, double);

int64_t steps_per_epoch(int64_t n_images, int batch_size) {
  return (n_images + batch_size - 1) / batch_size;
}

Batch make_batch(const std::vector<Image>& images, const TrainConfig& cfg,
                 int64_t iteration) {
  const int64_t n = static_cast<int64_t>(images.size());
  DCL_CHECK(n > 0, DataError, "make_batch: empty dataset");
  const int64_t spe = steps_per_epoch(n, cfg.batch_size);
  const int64_t epoch = iteration / spe;
  const int64_t pos = iteration % spe;

  std::vector<int64_t> perm(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  Rng shuffle_rng(derive_seed(cfg.seed, kShuffleTag, static_cast<uint64_t>(epoch)));
  for (int64_t i = n - 1; i > 0; --i) {
    int64_t j = static_cast<int64_t>(shuffle_rng.below(static_cast<uint64_t>(i + 1)));
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }

  const int64_t lo = pos * cfg.batch_size;
  const int64_t hi = std::min(n, lo + cfg.batch_size);
  const int64_t b = hi - lo;
  const int side = cfg.augment.out_size;

  Batch out;
  out.views_a = Tensor({b, 3, side, side});
  out.views_b = Tensor({b, 3, side, side});
  out.geom_a.resize(static_cast<size_t>(b));
  out.geom_b.resize(static_cast<size_t>(b));
  out.indices.resize(static_cast<size_t>(b));

  for (int64_t i = 0; i < b; ++i) {
    int64_t idx = perm[static_cast<size_t>(lo + i)];
    Rng rng(derive_seed(cfg.seed, kAugTag, static_cast<uint64_t>(epoch),
                        static_cast<uint64_t>(idx)));
    auto pair = augment::make_view_pair(images[static_cast<size_t>(idx)], idx, rng,
                                        cfg.augment);
    out.indices[static_cast<size_t>(i)] = idx;
    out.geom_a[static_cast<size_t>(i)] = pair.geom_a;
    out.geom_b[static_cast<size_t>(i)] = pair.geom_b;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
          out.views_a.at(i, c, y, x) = pair.view_a.at(y, x, c);
          out.views_b.at(i, c, y, x) = pair.view_b.at(y, x, c);
        }
  }
  return out;
}

loss::LossReport train_step(TrainState& st, const Batch& batch, const TrainConfig& cfg,
                            double lr) {
  const int s = cfg.encoder.grid_size;
  const int64_t cells = static_cast<int64_t>(s) * s;
  const int64_t e = cfg.encoder.embed_dim;
  const bool dense_on = cfg.dense_pathway;
  // the dense pathway off forces the global-only objective
  const double lam = dense_on ? loss::lambda_at(st.iteration, cfg.loss) : 0.0;
  const double tau = cfg.loss.temperature;
  const bool literal = cfg.loss.literal_denominator;

  st.query.zero_grads();

  const Tensor neg_global = st.global_queue.negatives_view();
  const Tensor neg_dense = dense_on ? st.dense_queue.negatives_view() : Tensor();

  struct DirectionOut {
    double lg = 0.0, ld = 0.0;
    Tensor key_global;  // [B,E]
    Tensor key_cells;   // [B,S*S,E]
  };

  auto direction_pass = [&](const Tensor& va, const Tensor& vb, double weight,
                            uint64_t dir_tag) {
    DirectionOut out;
    const int64_t b = va.dim(0);
    Tensor fq = st.query.backbone_forward(va, nn::Mode::train);
    Tensor q = st.query.global_head(fq, nn::Mode::train);
    Tensor theta_q;
    if (dense_on) theta_q = st.query.dense_head(fq, s, nn::Mode::train);

    Tensor fk = st.key.backbone_forward(vb, nn::Mode::key);
    out.key_global = st.key.global_head(fk, nn::Mode::key);
    if (dense_on) out.key_cells = st.key.dense_head(fk, s, nn::Mode::key);

    std::vector<int> corr;
    if (dense_on) {
      corr.resize(static_cast<size_t>(b * cells));
      for (int64_t bi = 0; bi < b; ++bi) {
        Tensor f1 = slice_fmap(fq, bi);
        Tensor f2 = slice_fmap(fk, bi);
        Tensor d1 = slice_cells(theta_q, bi);
        Tensor d2 = slice_cells(out.key_cells, bi);
        Rng mrng(derive_seed(st.seed, kMatchTag, static_cast<uint64_t>(st.iteration),
                             static_cast<uint64_t>(bi) * 2 + dir_tag));
        auto ci = matcher::extract_correspondence(cfg.match, f1, f2, d1, d2, s, mrng);
        std::copy(ci.begin(), ci.end(), corr.begin() + bi * cells);
      }
    }

    Tensor dq, dtheta;
    out.lg = loss::batch_info_nce(q, out.key_global, neg_global, tau, literal,
                                  lam < 1.0 ? &dq : nullptr);
    if (dense_on)
      out.ld = loss::batch_dense_info_nce(theta_q, out.key_cells, corr, neg_dense, tau,
                                          literal, lam > 0.0 ? &dtheta : nullptr);

    Tensor d_global, d_dense;
    if (lam < 1.0) {
      kernels::scale(dq.numel(), static_cast<float>((1.0 - lam) * weight), dq.data());
      d_global = std::move(dq);
    }
    if (dense_on && lam > 0.0) {
      kernels::scale(dtheta.numel(), static_cast<float>(lam * weight), dtheta.data());
      d_dense = std::move(dtheta);
    }
    if (d_global.numel() > 0 || d_dense.numel() > 0) {
      Tensor df = st.query.heads_backward(d_global, d_dense);
      st.query.backbone_backward(df);
    }
    return out;
  };

  const double weight = cfg.symmetrize ? 0.5 : 1.0;
  std::vector<DirectionOut> outs;
  outs.push_back(direction_pass(batch.views_a, batch.views_b, weight, 0));
  if (cfg.symmetrize) outs.push_back(direction_pass(batch.views_b, batch.views_a, weight, 1));

  double lg = 0.0, ld = 0.0;
  for (auto& o : outs) {
    lg += weight * o.lg;
    ld += weight * o.ld;
  }
  const double lt = loss::combined_loss(lg, ld, lam);
  DCL_CHECK(std::isfinite(lt), NumericError, "train_step: non-finite total loss");
  check_grads_finite(st.query);

  // Precompute dense queue entries before any state mutation so a failure
  // here leaves the step side-effect free.
  std::vector<Tensor> dense_keys;
  if (dense_on) {
    for (auto& o : outs) {
      const int64_t b = o.key_cells.dim(0);
      Tensor dk({b, e});
      for (int64_t bi = 0; bi < b; ++bi) {
        Tensor cellsb = slice_cells(o.key_cells, bi);
        std::vector<float> row;
        if (cfg.negative_mode == NegativeMode::pooled) {
          row = nn::pooled_dense_key(cellsb);
        } else {
          Rng krng(derive_seed(st.seed, kDenseKeyTag, static_cast<uint64_t>(st.iteration),
                               static_cast<uint64_t>(bi)));
          row = nn::sampled_dense_key(cellsb, krng);
        }
        std::copy(row.begin(), row.end(), dk.data() + bi * e);
      }
      dense_keys.push_back(std::move(dk));
    }
  }

  // ---- commit ----
  st.query.commit_batch_stats();
  auto qparams = st.query.params();
  sgd_update(qparams, st.sgd_buffers, lr, cfg.sgd_momentum, cfg.weight_decay);
  auto kparams = st.key.params();
  dictionary::momentum_update(kparams, qparams, cfg.momentum_m);
  for (auto& o : outs) st.global_queue.enqueue(o.key_global);
  for (auto& dk : dense_keys) st.dense_queue.enqueue(dk);
  st.iteration += 1;

  loss::LossReport rep;
  rep.l_global = lg;
  rep.l_dense = ld;
  rep.l_total = lt;
  rep.lambda_used = lam;
  return rep;
}

namespace {

// Bounded blocking batch channel between the prefetch thread and the
// optimization thread.
class BatchChannel {
 public:
  explicit BatchChannel(size_t depth) : depth_(depth) {}

  bool push(Batch&& b) {
    std::unique_lock<std::mutex> lk(m_);
    cv_push_.wait(lk, [&] { return q_.size() < depth_ || closed_; });
    if (closed_) return false;
    q_.push(std::move(b));
    cv_pop_.notify_one();
    return true;
  }

  std::optional<Batch> pop() {
    std::unique_lock<std::mutex> lk(m_);
    cv_pop_.wait(lk, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return std::nullopt;
    Batch b = std::move(q_.front());
    q_.pop();
    cv_push_.notify_one();
    return b;
  }

  void close() {
    std::unique_lock<std::mutex> lk(m_);
    closed_ = true;
    cv_push_.notify_all();
    cv_pop_.notify_all();
  }

 private:
  std::mutex m_;
  std::condition_variable cv_push_, cv_pop_;
  std::queue<Batch> q_;
  size_t depth_;
  bool closed_ = false;
};

}  // namespace

TrainResult train(TrainState& st, const std::vector<Image>& images, const TrainConfig& cfg,
                  const std::string& out_dir, const EpochCallback& on_epoch) {
  cfg.validate();
  DCL_CHECK(!images.empty(), DataError, "train: dataset is empty");
  const int64_t spe = steps_per_epoch(static_cast<int64_t>(images.size()), cfg.batch_size);
  const int64_t total = spe * cfg.epochs;
  DCL_CHECK(st.iteration <= total, ConfigError,
            "train: state iteration already past the configured schedule");

  std::ofstream metrics;
  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    bool fresh = st.iteration == 0;
    metrics.open(out_dir + "/metrics.csv",
                 fresh ? std::ios::trunc : (std::ios::app | std::ios::out));
    DCL_CHECK(metrics.good(), IoError, "train: cannot open metrics.csv under " + out_dir);
    if (fresh) metrics << "iteration,epoch,lr,l_global,l_dense,l_total,step_ms\n";
  }

  BatchChannel chan(2);
  std::thread producer([&, start = st.iteration] {
    for (int64_t it = start; it < total; ++it) {
      if (!chan.push(make_batch(images, cfg, it))) return;
    }
  });

  TrainResult res;
  double eg = 0, ed = 0, et = 0, ems = 0;
  int64_t esteps = 0;

  auto finish_producer = [&] {
    chan.close();
    if (producer.joinable()) producer.join();
  };

  try {
    while (st.iteration < total) {
      auto maybe = chan.pop();
      DCL_CHECK(maybe.has_value(), DataError, "train: batch channel closed early");
      const int64_t it = st.iteration;
      const int epoch = static_cast<int>(it / spe);
      const double lr = cosine_lr(it, total, cfg.base_lr);

      auto t0 = Clock::now();
      loss::LossReport rep = train_step(st, *maybe, cfg, lr);
      double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();

      res.steps.push_back({it, epoch, lr, rep, ms});
      if (metrics.is_open()) {
        metrics << it << ',' << epoch << ',' << lr << ',' << rep.l_global << ','
                << rep.l_dense << ',' << rep.l_total << ',' << ms << '\n';
        DCL_CHECK(metrics.good(), IoError, "train: metrics.csv write failed");
      }
      eg += rep.l_global;
      ed += rep.l_dense;
      et += rep.l_total;
      ems += ms;
      ++esteps;

      if ((it + 1) % spe == 0) {
        EpochStats es{epoch, eg / esteps, ed / esteps, et / esteps, ems / esteps};
        res.epochs.push_back(es);
        if (on_epoch) on_epoch(es);
        eg = ed = et = ems = 0;
        esteps = 0;
        if (!out_dir.empty() && cfg.checkpoint_every > 0 &&
            (epoch + 1) % cfg.checkpoint_every == 0 && it + 1 < total) {
          char name[64];
          std::snprintf(name, sizeof(name), "/epoch_%04d.ckpt", epoch + 1);
          save_checkpoint(st, cfg, out_dir + name, cfg.save_queues);
        }
      }
    }
  } catch (...) {
    finish_producer();
    throw;
  }
  finish_producer();

  if (!out_dir.empty()) {
    metrics.flush();
    save_checkpoint(st, cfg, out_dir + "/final.ckpt", cfg.save_queues);
  }
  return res;
}

void save_checkpoint(const TrainState& st, const TrainConfig& cfg, const std::string& path,
                     bool save_queues) {
  checkpoint::Archive a;
  a.put_scalar_u64("meta.grid_s", static_cast<uint64_t>(cfg.encoder.grid_size));
  a.put_scalar_u64("meta.iteration", static_cast<uint64_t>(st.iteration));
  a.put_scalar_u64("meta.seed", st.seed);
  a.put_scalar_u64("meta.has_queues", save_queues ? 1 : 0);

  auto& qmut = const_cast<TrainState&>(st);
  for (auto& p : qmut.query.params()) a.put("model.query." + p.name, *p.value);
  for (auto& p : qmut.key.params()) a.put("model.key." + p.name, *p.value);
  for (auto& [name, buf] : st.sgd_buffers) a.put("optim." + name, buf);
  if (save_queues) {
    a.put("queue.global.buffer", st.global_queue.buffer());
    a.put_scalar_u64("queue.global.head", static_cast<uint64_t>(st.global_queue.head()));
    a.put_scalar_u64("queue.global.size", static_cast<uint64_t>(st.global_queue.size()));
    a.put("queue.dense.buffer", st.dense_queue.buffer());
    a.put_scalar_u64("queue.dense.head", static_cast<uint64_t>(st.dense_queue.head()));
    a.put_scalar_u64("queue.dense.size", static_cast<uint64_t>(st.dense_queue.size()));
  }
  a.save(path);
}

namespace {

void load_params_into(const checkpoint::Archive& a, const std::string& prefix,
                      nn::Encoder<float>& enc) {
  for (auto& p : enc.params()) {
    Tensor t = a.get(prefix + p.name);
    DCL_CHECK(t.same_shape(*p.value), DataError,
              "checkpoint: shape mismatch for " + prefix + p.name + " (file " +
                  t.shape_str() + ", model " + p.value->shape_str() + ")");
    *p.value = std::move(t);
  }
}

}  // namespace

TrainState load_checkpoint(const std::string& path, const TrainConfig& cfg) {
  checkpoint::Archive a = checkpoint::Archive::load(path);
  uint64_t ck_s = a.get_scalar_u64("meta.grid_s");
  DCL_CHECK(ck_s == static_cast<uint64_t>(cfg.encoder.grid_size), DataError,
            "checkpoint: dense head grid size mismatch (checkpoint S=" +
                std::to_string(ck_s) + ", config S=" +
                std::to_string(cfg.encoder.grid_size) + ")");

  TrainState st(cfg);
  load_params_into(a, "model.query.", st.query);
  load_params_into(a, "model.key.", st.key);

  st.sgd_buffers.clear();
  for (auto& p : st.query.params()) {
    if (!p.learnable) continue;
    if (a.has("optim." + p.name)) st.sgd_buffers[p.name] = a.get("optim." + p.name);
  }

  if (a.get_scalar_u64("meta.has_queues") == 1) {
    st.global_queue.restore(a.get("queue.global.buffer"),
                            static_cast<int64_t>(a.get_scalar_u64("queue.global.head")),
                            static_cast<int64_t>(a.get_scalar_u64("queue.global.size")));
    st.dense_queue.restore(a.get("queue.dense.buffer"),
                           static_cast<int64_t>(a.get_scalar_u64("queue.dense.head")),
                           static_cast<int64_t>(a.get_scalar_u64("queue.dense.size")));
  }
  st.iteration = static_cast<int64_t>(a.get_scalar_u64("meta.iteration"));
  st.seed = a.get_scalar_u64("meta.seed");
  return st;
}

TrainState load_weights_only(const std::string& path, const TrainConfig& cfg) {
  checkpoint::Archive a = checkpoint::Archive::load(path);
  TrainState st(cfg);
  load_params_into(a, "model.query.", st.query);
  // fresh momentum start: key encoder mirrors the loaded query weights
  auto qp = st.query.params();
  auto kp = st.key.params();
  for (size_t i = 0; i < qp.size(); ++i) *kp[i].value = *qp[i].value;
  return st;
}

uint64_t param_hash(TrainState& st) {
  uint64_t h = kFnvBasis;
  for (auto& p : st.query.params()) {
    h = fnv1a(h, p.name.data(), p.name.size());
    h = fnv1a(h, p.value->data(), static_cast<size_t>(p.value->numel()) * sizeof(float));
  }
  return h;
}

uint64_t state_digest(TrainState& st) {
  uint64_t h = kFnvBasis;
  auto hash_params = [&](nn::Encoder<float>& e) {
    for (auto& p : e.params()) {
      h = fnv1a(h, p.name.data(), p.name.size());
      h = fnv1a(h, p.value->data(), static_cast<size_t>(p.value->numel()) * sizeof(float));
    }
  };
  hash_params(st.query);
  hash_params(st.key);
  for (auto& [name, buf] : st.sgd_buffers) {
    h = fnv1a(h, name.data(), name.size());
    h = fnv1a(h, buf.data(), static_cast<size_t>(buf.numel()) * sizeof(float));
  }
  for (auto* q : {&st.global_queue, &st.dense_queue}) {
    h = fnv1a(h, q->buffer().data(), static_cast<size_t>(q->buffer().numel()) * sizeof(float));
    int64_t hs[2] = {q->head(), q->size()};
    h = fnv1a(h, hs, sizeof(hs));
  }
  h = fnv1a(h, &st.iteration, sizeof(st.iteration));
  return h;
}

}  // namespace densecl::trainer
