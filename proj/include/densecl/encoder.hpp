// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "densecl/rng.hpp"
#include "densecl/tensor.hpp"

namespace densecl::nn {

enum class Mode {
  train,  // batch statistics, caches activations for backward
  key,    // batch statistics, no caching (momentum-encoder forward)
  eval,   // running statistics, no caching
};

template <typename T>
struct ParamRef {
  std::string name;
  TensorT<T>* value = nullptr;
  TensorT<T>* grad = nullptr;  // null for buffers
  bool learnable = true;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual TensorT<T> forward(const TensorT<T>& x, Mode mode) = 0;
  /// Accumulates parameter gradients and returns dL/dx. Only valid after a
  /// Mode::train forward.
  virtual TensorT<T> backward(const TensorT<T>& dy) = 0;
  virtual void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {}
  /// Applies any batch-statistic updates staged by the last train forward.
  /// Kept separate from forward so a failed step can leave state untouched.
  virtual void commit_batch_stats() {}
};

/// 3x3 convolution, padding 1, stride 1 or 2. Bias is dropped under
/// normalization (it would cancel against the per-channel mean).
/// Batch-parallel im2col + GEMM; weight gradients are reduced over
/// per-worker partials in worker order.
template <typename T>
class Conv3x3 final : public Layer<T> {
 public:
  Conv3x3(int in_ch, int out_ch, int stride, bool has_bias = true);

  TensorT<T> forward(const TensorT<T>& x, Mode mode) override;
  TensorT<T> backward(const TensorT<T>& dy) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) override;

  void init(Rng& rng);

  TensorT<T> weight, bias;       // [out,in,3,3], [out] (bias may be absent)
  TensorT<T> d_weight, d_bias;

 private:
  int in_ch_, out_ch_, stride_;
  bool has_bias_;
  TensorT<T> x_cache_;
};

/// Per-channel normalization over (batch, space) at train time with running
/// statistics for eval. Running-stat updates are staged and applied by
/// commit_batch_stats().
template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5);

  TensorT<T> forward(const TensorT<T>& x, Mode mode) override;
  TensorT<T> backward(const TensorT<T>& dy) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  void commit_batch_stats() override;

  TensorT<T> gamma, beta;
  TensorT<T> d_gamma, d_beta;
  TensorT<T> running_mean, running_var;

 private:
  int channels_;
  double momentum_, eps_;
  TensorT<T> x_cache_, mean_, invstd_;
  TensorT<T> pending_mean_, pending_var_;
  bool has_pending_ = false;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  TensorT<T> forward(const TensorT<T>& x, Mode mode) override;
  TensorT<T> backward(const TensorT<T>& dy) override;

 private:
  TensorT<T> y_cache_;
};

/// Row-major fully connected layer: y = x W^T + b over [N, in] rows.
template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(int in_features, int out_features);

  TensorT<T> forward(const TensorT<T>& x, Mode mode) override;
  TensorT<T> backward(const TensorT<T>& dy) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  void init(Rng& rng);

  TensorT<T> weight, bias;  // [out,in], [out]
  TensorT<T> d_weight, d_bias;

 private:
  int in_, out_;
  TensorT<T> x_cache_;
};

/// Per-row l2 normalization y = x / (|x| + eps), eps = 1e-12.
template <typename T>
class L2NormalizeRows final : public Layer<T> {
 public:
  TensorT<T> forward(const TensorT<T>& x, Mode mode) override;
  TensorT<T> backward(const TensorT<T>& dy) override;

 private:
  TensorT<T> x_cache_;
  std::vector<T> norms_;
};

// ---- functional pieces ----

/// PyTorch-convention adaptive average pooling of [B,C,H,W] to [B,C,S,S]:
/// bin i covers rows [floor(i*H/S), ceil((i+1)*H/S)).
template <typename T>
TensorT<T> adaptive_avg_pool(const TensorT<T>& x, int s);
template <typename T>
TensorT<T> adaptive_avg_pool_backward(const TensorT<T>& dy, int h, int w);

template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x);  // [B,C,H,W] -> [B,C]
template <typename T>
TensorT<T> global_avg_pool_backward(const TensorT<T>& dp, int h, int w);

struct BackboneConfig {
  std::vector<int> channels{32, 64, 128, 256};
  bool batchnorm = true;
};

/// Stage layout: conv3x3 s1 into channels[0], then one [conv s2 + conv s1]
/// stage per further entry; every conv is followed by normalization (when
/// enabled) and ReLU. Total stride = 2^(stages-1).
template <typename T>
class Backbone {
 public:
  explicit Backbone(const BackboneConfig& cfg);

  /// Input must be square [B,3,side,side] with side divisible by stride().
  TensorT<T> forward(const TensorT<T>& x, Mode mode);
  TensorT<T> backward(const TensorT<T>& dy);
  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out);
  void commit_batch_stats();
  void init(Rng& rng);

  int stride() const { return stride_; }
  int out_channels() const { return out_channels_; }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  int stride_ = 1;
  int out_channels_ = 0;
};

/// Shared two-layer MLP: linear(K->hidden), ReLU, linear(hidden->E). The
/// global head applies it to the pooled vector, the dense head to every grid
/// cell (a 1x1 convolution is exactly a per-row linear here).
template <typename T>
class ProjectionMlp {
 public:
  ProjectionMlp(int in_dim, int hidden_dim, int out_dim);

  TensorT<T> forward(const TensorT<T>& rows, Mode mode);  // [N,K] -> [N,E] unit rows
  TensorT<T> backward(const TensorT<T>& dy);
  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out);
  void init(Rng& rng);

  int64_t param_count() const;

 private:
  Linear<T> fc1_;
  ReLU<T> relu_;
  Linear<T> fc2_;
  L2NormalizeRows<T> norm_;
};

struct EncoderConfig {
  BackboneConfig backbone;
  int hidden_dim = 256;
  int embed_dim = 128;
  int grid_size = 7;
};

/// Backbone plus the two parallel projection heads.
template <typename T>
class Encoder {
 public:
  explicit Encoder(const EncoderConfig& cfg);

  /// [B,3,side,side] -> feature map [B,K,Hf,Wf].
  TensorT<T> backbone_forward(const TensorT<T>& views, Mode mode);

  /// Feature map -> [B,E] unit global embeddings.
  TensorT<T> global_head(const TensorT<T>& fmap, Mode mode);

  /// Feature map -> [B,S*S,E] unit dense embeddings (cell index = row*S+col).
  TensorT<T> dense_head(const TensorT<T>& fmap, int grid_s, Mode mode);

  /// dL/dfmap from the two head gradients (either may be empty).
  TensorT<T> heads_backward(const TensorT<T>& d_global, const TensorT<T>& d_dense);
  TensorT<T> backbone_backward(const TensorT<T>& d_fmap);

  std::vector<ParamRef<T>> params();
  void commit_batch_stats();
  void zero_grads();
  void init(uint64_t seed);

  const EncoderConfig& config() const { return cfg_; }
  int stride() const { return backbone_.stride(); }

  int64_t global_head_param_count() const { return global_mlp_.param_count(); }
  int64_t dense_head_param_count() const { return dense_mlp_.param_count(); }

 private:
  EncoderConfig cfg_;
  Backbone<T> backbone_;
  ProjectionMlp<T> global_mlp_;
  ProjectionMlp<T> dense_mlp_;
  // caches for head backward
  int fmap_h_ = 0, fmap_w_ = 0;
  int dense_s_ = 0;
  int64_t batch_ = 0;
};

/// Mean over all grid cells of [S*S,E] rows, re-normalized to unit length.
/// Throws NumericError when the mean vector is degenerate (norm < 1e-12).
template <typename T>
std::vector<T> pooled_dense_key(const TensorT<T>& cells);

/// One uniformly sampled grid cell vector.
template <typename T>
std::vector<T> sampled_dense_key(const TensorT<T>& cells, Rng& rng);

}  // namespace densecl::nn
