// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#include "densecl/encoder.hpp"

#include <cmath>
#include <cstring>

#include "densecl/common.hpp"
#include "densecl/kernels.hpp"
#include "densecl/parallel.hpp"

namespace densecl::nn {

namespace {

template <typename T>
void im2col_3x3(const T* x, int c_in, int h, int w, int stride, int ho, int wo, T* cols) {
  const int64_t plane_out = static_cast<int64_t>(ho) * wo;
  for (int c = 0; c < c_in; ++c) {
    const T* plane = x + static_cast<int64_t>(c) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = cols + (static_cast<int64_t>(c) * 9 + ky * 3 + kx) * plane_out;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride + ky - 1;
          T* dst = row + static_cast<int64_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = plane + static_cast<int64_t>(iy) * w;
          if (stride == 1) {
            int x0 = kx - 1;
            int lo = x0 < 0 ? -x0 : 0;
            int hi = w - x0 < wo ? w - x0 : wo;
            for (int ox = 0; ox < lo; ++ox) dst[ox] = T(0);
            if (hi > lo) std::memcpy(dst + lo, src + lo + x0, static_cast<size_t>(hi - lo) * sizeof(T));
            for (int ox = hi; ox < wo; ++ox) dst[ox] = T(0);
          } else {
            for (int ox = 0; ox < wo; ++ox) {
              int ix = ox * stride + kx - 1;
              dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_3x3_add(const T* cols, int c_in, int h, int w, int stride, int ho, int wo,
                    T* x) {
  const int64_t plane_out = static_cast<int64_t>(ho) * wo;
  for (int c = 0; c < c_in; ++c) {
    T* plane = x + static_cast<int64_t>(c) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = cols + (static_cast<int64_t>(c) * 9 + ky * 3 + kx) * plane_out;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<int64_t>(oy) * wo;
          T* dst = plane + static_cast<int64_t>(iy) * w;
          if (stride == 1) {
            int x0 = kx - 1;
            int lo = x0 < 0 ? -x0 : 0;
            int hi = w - x0 < wo ? w - x0 : wo;
            if (hi > lo) kernels::axpy(hi - lo, T(1), src + lo, dst + lo + x0);
          } else {
            for (int ox = 0; ox < wo; ++ox) {
              int ix = ox * stride + kx - 1;
              if (ix >= 0 && ix < w) dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

template <typename T>
std::vector<T>& tls_buffer(int which) {
  static thread_local std::vector<T> bufs[3];
  return bufs[which];
}

int out_side(int in, int stride) { return (in - 1) / stride + 1; }

}  // namespace

// ---------------- Conv3x3 ----------------

template <typename T>
Conv3x3<T>::Conv3x3(int in_ch, int out_ch, int stride, bool has_bias)
    : weight({out_ch, in_ch, 3, 3}),
      d_weight({out_ch, in_ch, 3, 3}),
      in_ch_(in_ch),
      out_ch_(out_ch),
      stride_(stride),
      has_bias_(has_bias) {
  DCL_CHECK(stride == 1 || stride == 2, ConfigError, "conv stride must be 1 or 2");
  if (has_bias_) {
    bias = TensorT<T>({out_ch});
    d_bias = TensorT<T>({out_ch});
  }
}

template <typename T>
void Conv3x3<T>::init(Rng& rng) {
  T std = static_cast<T>(std::sqrt(2.0 / (in_ch_ * 9)));
  for (int64_t i = 0; i < weight.numel(); ++i) weight[i] = static_cast<T>(rng.normal()) * std;
  bias.zero();
}

template <typename T>
TensorT<T> Conv3x3<T>::forward(const TensorT<T>& x, Mode mode) {
  DCL_CHECK(x.rank() == 4 && x.dim(1) == in_ch_, DataError, "conv: bad input shape");
  const int b = static_cast<int>(x.dim(0)), h = static_cast<int>(x.dim(2)),
            w = static_cast<int>(x.dim(3));
  const int ho = out_side(h, stride_), wo = out_side(w, stride_);
  TensorT<T> y({b, out_ch_, ho, wo});
  const int64_t k9 = static_cast<int64_t>(in_ch_) * 9;
  const int64_t hw = static_cast<int64_t>(ho) * wo;

  parallel_for_each(0, b, [&](int, int64_t bi) {
    auto& cols = tls_buffer<T>(0);
    cols.resize(static_cast<size_t>(k9 * hw));
    const T* xb = x.data() + bi * in_ch_ * h * w;
    T* yb = y.data() + bi * out_ch_ * hw;
    im2col_3x3(xb, in_ch_, h, w, stride_, ho, wo, cols.data());
    kernels::gemm_nn(out_ch_, hw, k9, weight.data(), cols.data(), yb, false);
    if (has_bias_) {
      for (int co = 0; co < out_ch_; ++co) {
        T bv = bias[co];
        T* plane = yb + static_cast<int64_t>(co) * hw;
        for (int64_t i = 0; i < hw; ++i) plane[i] += bv;
      }
    }
  });

  if (mode == Mode::train) x_cache_ = x;
  return y;
}

template <typename T>
TensorT<T> Conv3x3<T>::backward(const TensorT<T>& dy) {
  const TensorT<T>& x = x_cache_;
  DCL_CHECK(x.numel() > 0, DataError, "conv backward without cached forward");
  const int b = static_cast<int>(x.dim(0)), h = static_cast<int>(x.dim(2)),
            w = static_cast<int>(x.dim(3));
  const int ho = static_cast<int>(dy.dim(2)), wo = static_cast<int>(dy.dim(3));
  const int64_t k9 = static_cast<int64_t>(in_ch_) * 9;
  const int64_t hw = static_cast<int64_t>(ho) * wo;

  TensorT<T> dx({b, in_ch_, h, w});
  const int nw = worker_count();
  std::vector<TensorT<T>> dw_part(static_cast<size_t>(nw));
  std::vector<TensorT<T>> db_part(static_cast<size_t>(nw));

  parallel_for(0, b, [&](int wkr, int64_t b0, int64_t b1) {
    auto& dwp = dw_part[static_cast<size_t>(wkr)];
    auto& dbp = db_part[static_cast<size_t>(wkr)];
    dwp = TensorT<T>({out_ch_, k9});
    if (has_bias_) dbp = TensorT<T>({out_ch_});
    auto& cols = tls_buffer<T>(0);
    auto& dcols = tls_buffer<T>(1);
    cols.resize(static_cast<size_t>(k9 * hw));
    dcols.resize(static_cast<size_t>(k9 * hw));
    for (int64_t bi = b0; bi < b1; ++bi) {
      const T* xb = x.data() + bi * in_ch_ * h * w;
      const T* dyb = dy.data() + bi * out_ch_ * hw;
      im2col_3x3(xb, in_ch_, h, w, stride_, ho, wo, cols.data());
      kernels::gemm_nt(out_ch_, k9, hw, dyb, cols.data(), dwp.data(), true);
      if (has_bias_)
        for (int co = 0; co < out_ch_; ++co)
          dbp[co] += kernels::sum(dyb + static_cast<int64_t>(co) * hw, hw);
      kernels::gemm_tn(k9, hw, out_ch_, weight.data(), dyb, dcols.data(), false);
      col2im_3x3_add(dcols.data(), in_ch_, h, w, stride_, ho, wo,
                     dx.data() + bi * in_ch_ * h * w);
    }
  });

  for (int wkr = 0; wkr < nw; ++wkr) {
    if (dw_part[static_cast<size_t>(wkr)].numel() == 0) continue;
    kernels::axpy(d_weight.numel(), T(1), dw_part[static_cast<size_t>(wkr)].data(),
                  d_weight.data());
    if (has_bias_)
      kernels::axpy(d_bias.numel(), T(1), db_part[static_cast<size_t>(wkr)].data(),
                    d_bias.data());
  }
  return dx;
}

template <typename T>
void Conv3x3<T>::collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + ".weight", &weight, &d_weight, true});
  if (has_bias_) out.push_back({prefix + ".bias", &bias, &d_bias, true});
}

// ---------------- BatchNorm2d ----------------

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int channels, double momentum, double eps)
    : gamma({channels}),
      beta({channels}),
      d_gamma({channels}),
      d_beta({channels}),
      running_mean({channels}),
      running_var({channels}),
      channels_(channels),
      momentum_(momentum),
      eps_(eps) {
  gamma.fill(T(1));
  running_var.fill(T(1));
}

template <typename T>
TensorT<T> BatchNorm2d<T>::forward(const TensorT<T>& x, Mode mode) {
  DCL_CHECK(x.rank() == 4 && x.dim(1) == channels_, DataError, "batchnorm: bad input shape");
  const int64_t b = x.dim(0), hw = x.dim(2) * x.dim(3);
  const int64_t n = b * hw;
  TensorT<T> y(x.shape());
  TensorT<T> mean({channels_}), invstd({channels_}), var({channels_});

  if (mode == Mode::eval) {
    for (int c = 0; c < channels_; ++c) {
      mean[c] = running_mean[c];
      invstd[c] = T(1) / static_cast<T>(std::sqrt(static_cast<double>(running_var[c]) + eps_));
    }
  } else {
    parallel_for_each(0, channels_, [&](int, int64_t c) {
      T s = T(0), ss = T(0);
      for (int64_t bi = 0; bi < b; ++bi) {
        const T* plane = x.data() + (bi * channels_ + c) * hw;
        s += kernels::sum(plane, hw);
        ss += kernels::sumsq(plane, hw);
      }
      T m = s / static_cast<T>(n);
      T v = ss / static_cast<T>(n) - m * m;
      if (v < T(0)) v = T(0);
      mean[c] = m;
      var[c] = v;
      invstd[c] = T(1) / static_cast<T>(std::sqrt(static_cast<double>(v) + eps_));
    });
  }

  parallel_for_each(0, b * channels_, [&](int, int64_t idx) {
    int64_t c = idx % channels_;
    T a = gamma[c] * invstd[c];
    kernels::scale_shift(hw, a, beta[c] - a * mean[c], x.data() + idx * hw,
                         y.data() + idx * hw);
  });

  if (mode == Mode::train) {
    x_cache_ = x;
    mean_ = mean;
    invstd_ = invstd;
    pending_mean_ = mean;
    pending_var_ = var;
    if (n > 1) {
      T ub = static_cast<T>(n) / static_cast<T>(n - 1);
      kernels::scale(pending_var_.numel(), ub, pending_var_.data());
    }
    has_pending_ = true;
  }
  return y;
}

template <typename T>
void BatchNorm2d<T>::commit_batch_stats() {
  if (!has_pending_) return;
  T rho = static_cast<T>(momentum_);
  for (int c = 0; c < channels_; ++c) {
    running_mean[c] = (T(1) - rho) * running_mean[c] + rho * pending_mean_[c];
    running_var[c] = (T(1) - rho) * running_var[c] + rho * pending_var_[c];
  }
  has_pending_ = false;
}

template <typename T>
TensorT<T> BatchNorm2d<T>::backward(const TensorT<T>& dy) {
  const TensorT<T>& x = x_cache_;
  DCL_CHECK(x.numel() > 0, DataError, "batchnorm backward without cached forward");
  const int64_t b = x.dim(0), hw = x.dim(2) * x.dim(3);
  const int64_t n = b * hw;
  TensorT<T> dx(x.shape());

  parallel_for_each(0, channels_, [&](int, int64_t c) {
    T m = mean_[c], is = invstd_[c], g = gamma[c];
    T sdy = T(0), sdot = T(0);
    for (int64_t bi = 0; bi < b; ++bi) {
      const T* xp = x.data() + (bi * channels_ + c) * hw;
      const T* dyp = dy.data() + (bi * channels_ + c) * hw;
      sdy += kernels::sum(dyp, hw);
      sdot += kernels::dot(dyp, xp, hw);
    }
    T sdyxh = (sdot - m * sdy) * is;
    d_gamma[c] += sdyxh;
    d_beta[c] += sdy;
    T mdy = sdy / static_cast<T>(n);
    T mdyxh = sdyxh / static_cast<T>(n);
    // dx = g*is*(dy - mdy - xhat*mdyxh) expands to a*dy + bb*x + cc
    T a = g * is;
    T bb = -g * is * is * mdyxh;
    T cc = g * is * (is * m * mdyxh - mdy);
    for (int64_t bi = 0; bi < b; ++bi) {
      int64_t off = (bi * channels_ + c) * hw;
      kernels::triad(hw, a, bb, cc, dy.data() + off, x.data() + off, dx.data() + off);
    }
  });
  return dx;
}

template <typename T>
void BatchNorm2d<T>::collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + ".gamma", &gamma, &d_gamma, true});
  out.push_back({prefix + ".beta", &beta, &d_beta, true});
  out.push_back({prefix + ".running_mean", &running_mean, nullptr, false});
  out.push_back({prefix + ".running_var", &running_var, nullptr, false});
}

// ---------------- ReLU ----------------

template <typename T>
TensorT<T> ReLU<T>::forward(const TensorT<T>& x, Mode mode) {
  TensorT<T> y(x.shape());
  kernels::relu_fwd(x.numel(), x.data(), y.data());
  if (mode == Mode::train) y_cache_ = y;
  return y;
}

template <typename T>
TensorT<T> ReLU<T>::backward(const TensorT<T>& dy) {
  DCL_CHECK(y_cache_.numel() == dy.numel(), DataError, "relu backward shape mismatch");
  TensorT<T> dx(dy.shape());
  kernels::relu_bwd(dy.numel(), y_cache_.data(), dy.data(), dx.data());
  return dx;
}

// ---------------- Linear ----------------

template <typename T>
Linear<T>::Linear(int in_features, int out_features)
    : weight({out_features, in_features}),
      bias({out_features}),
      d_weight({out_features, in_features}),
      d_bias({out_features}),
      in_(in_features),
      out_(out_features) {}

template <typename T>
void Linear<T>::init(Rng& rng) {
  T std = static_cast<T>(std::sqrt(2.0 / in_));
  for (int64_t i = 0; i < weight.numel(); ++i) weight[i] = static_cast<T>(rng.normal()) * std;
  bias.zero();
}

template <typename T>
TensorT<T> Linear<T>::forward(const TensorT<T>& x, Mode mode) {
  DCL_CHECK(x.rank() == 2 && x.dim(1) == in_, DataError, "linear: bad input shape");
  const int64_t n = x.dim(0);
  TensorT<T> y({n, out_});
  parallel_for(0, n, [&](int, int64_t r0, int64_t r1) {
    if (r1 <= r0) return;
    kernels::gemm_nt(r1 - r0, out_, in_, x.data() + r0 * in_, weight.data(),
                     y.data() + r0 * out_, false);
    for (int64_t r = r0; r < r1; ++r)
      kernels::axpy(out_, T(1), bias.data(), y.data() + r * out_);
  });
  if (mode == Mode::train) x_cache_ = x;
  return y;
}

template <typename T>
TensorT<T> Linear<T>::backward(const TensorT<T>& dy) {
  const TensorT<T>& x = x_cache_;
  DCL_CHECK(x.numel() > 0, DataError, "linear backward without cached forward");
  const int64_t n = x.dim(0);
  TensorT<T> dx({n, in_});
  const int nw = worker_count();
  std::vector<TensorT<T>> dw_part(static_cast<size_t>(nw));

  parallel_for(0, n, [&](int wkr, int64_t r0, int64_t r1) {
    if (r1 <= r0) return;
    kernels::gemm_nn(r1 - r0, in_, out_, dy.data() + r0 * out_, weight.data(),
                     dx.data() + r0 * in_, false);
    auto& dwp = dw_part[static_cast<size_t>(wkr)];
    dwp = TensorT<T>({out_, in_});
    kernels::gemm_tn(out_, in_, r1 - r0, dy.data() + r0 * out_, x.data() + r0 * in_,
                     dwp.data(), false);
  });
  for (int wkr = 0; wkr < nw; ++wkr) {
    if (dw_part[static_cast<size_t>(wkr)].numel() == 0) continue;
    kernels::axpy(d_weight.numel(), T(1), dw_part[static_cast<size_t>(wkr)].data(),
                  d_weight.data());
  }
  for (int64_t r = 0; r < n; ++r)
    kernels::axpy(out_, T(1), dy.data() + r * out_, d_bias.data());
  return dx;
}

template <typename T>
void Linear<T>::collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + ".weight", &weight, &d_weight, true});
  out.push_back({prefix + ".bias", &bias, &d_bias, true});
}

// ---------------- L2NormalizeRows ----------------

template <typename T>
TensorT<T> L2NormalizeRows<T>::forward(const TensorT<T>& x, Mode mode) {
  const int64_t n = x.dim(0), d = x.dim(1);
  constexpr T eps = T(1e-12);
  TensorT<T> y(x.shape());
  std::vector<T> norms(static_cast<size_t>(n));
  for (int64_t r = 0; r < n; ++r) {
    const T* xr = x.data() + r * d;
    T nr = static_cast<T>(std::sqrt(static_cast<double>(kernels::sumsq(xr, d))));
    norms[static_cast<size_t>(r)] = nr;
    T inv = T(1) / (nr + eps);
    T* yr = y.data() + r * d;
    for (int64_t i = 0; i < d; ++i) yr[i] = xr[i] * inv;
  }
  if (mode == Mode::train) {
    x_cache_ = x;
    norms_ = std::move(norms);
  }
  return y;
}

template <typename T>
TensorT<T> L2NormalizeRows<T>::backward(const TensorT<T>& dy) {
  const TensorT<T>& x = x_cache_;
  DCL_CHECK(x.numel() == dy.numel(), DataError, "l2norm backward shape mismatch");
  const int64_t n = x.dim(0), d = x.dim(1);
  constexpr T eps = T(1e-12);
  TensorT<T> dx(x.shape());
  for (int64_t r = 0; r < n; ++r) {
    const T* xr = x.data() + r * d;
    const T* dyr = dy.data() + r * d;
    T* dxr = dx.data() + r * d;
    T nr = norms_[static_cast<size_t>(r)];
    T inv = T(1) / (nr + eps);
    T t = kernels::dot(dyr, xr, d);
    if (nr > T(0)) {
      T coef = t / (nr * (nr + eps) * (nr + eps));
      for (int64_t i = 0; i < d; ++i) dxr[i] = dyr[i] * inv - xr[i] * coef;
    } else {
      for (int64_t i = 0; i < d; ++i) dxr[i] = dyr[i] * inv;
    }
  }
  return dx;
}

// ---------------- pools ----------------

template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x) {
  const int64_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  TensorT<T> p({b, c});
  for (int64_t i = 0; i < b * c; ++i)
    p[i] = kernels::sum(x.data() + i * hw, hw) / static_cast<T>(hw);
  return p;
}

template <typename T>
TensorT<T> global_avg_pool_backward(const TensorT<T>& dp, int h, int w) {
  const int64_t b = dp.dim(0), c = dp.dim(1), hw = static_cast<int64_t>(h) * w;
  TensorT<T> dx({b, c, h, w});
  for (int64_t i = 0; i < b * c; ++i) {
    T v = dp[i] / static_cast<T>(hw);
    T* plane = dx.data() + i * hw;
    for (int64_t j = 0; j < hw; ++j) plane[j] = v;
  }
  return dx;
}

namespace {
inline int bin_lo(int i, int in, int s) { return static_cast<int>((static_cast<int64_t>(i) * in) / s); }
inline int bin_hi(int i, int in, int s) {
  return static_cast<int>(((static_cast<int64_t>(i) + 1) * in + s - 1) / s);
}
}  // namespace

template <typename T>
TensorT<T> adaptive_avg_pool(const TensorT<T>& x, int s) {
  const int64_t b = x.dim(0), c = x.dim(1);
  const int h = static_cast<int>(x.dim(2)), w = static_cast<int>(x.dim(3));
  DCL_CHECK(s >= 1 && s <= h && s <= w, DataError,
            "adaptive_avg_pool: grid size " + std::to_string(s) +
                " out of range for " + std::to_string(h) + "x" + std::to_string(w) +
                " feature map");
  TensorT<T> y({b, c, s, s});
  for (int64_t bc = 0; bc < b * c; ++bc) {
    const T* plane = x.data() + bc * h * w;
    T* out = y.data() + bc * s * s;
    for (int i = 0; i < s; ++i) {
      int y0 = bin_lo(i, h, s), y1 = bin_hi(i, h, s);
      for (int j = 0; j < s; ++j) {
        int x0 = bin_lo(j, w, s), x1 = bin_hi(j, w, s);
        T acc = T(0);
        for (int yy = y0; yy < y1; ++yy)
          for (int xx = x0; xx < x1; ++xx) acc += plane[yy * w + xx];
        out[i * s + j] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  }
  return y;
}

template <typename T>
TensorT<T> adaptive_avg_pool_backward(const TensorT<T>& dy, int h, int w) {
  const int64_t b = dy.dim(0), c = dy.dim(1);
  const int s = static_cast<int>(dy.dim(2));
  TensorT<T> dx({b, c, h, w});
  for (int64_t bc = 0; bc < b * c; ++bc) {
    const T* dout = dy.data() + bc * s * s;
    T* plane = dx.data() + bc * h * w;
    for (int i = 0; i < s; ++i) {
      int y0 = bin_lo(i, h, s), y1 = bin_hi(i, h, s);
      for (int j = 0; j < s; ++j) {
        int x0 = bin_lo(j, w, s), x1 = bin_hi(j, w, s);
        T v = dout[i * s + j] / static_cast<T>((y1 - y0) * (x1 - x0));
        for (int yy = y0; yy < y1; ++yy)
          for (int xx = x0; xx < x1; ++xx) plane[yy * w + xx] += v;
      }
    }
  }
  return dx;
}

// ---------------- Backbone ----------------

template <typename T>
Backbone<T>::Backbone(const BackboneConfig& cfg) {
  DCL_CHECK(!cfg.channels.empty(), ConfigError, "backbone needs at least one stage");
  int prev = 3;
  for (size_t i = 0; i < cfg.channels.size(); ++i) {
    int ch = cfg.channels[i];
    int n_convs = i == 0 ? 1 : 2;
    for (int k = 0; k < n_convs; ++k) {
      int stride = (i > 0 && k == 0) ? 2 : 1;
      layers_.push_back(std::make_unique<Conv3x3<T>>(prev, ch, stride, !cfg.batchnorm));
      if (cfg.batchnorm) layers_.push_back(std::make_unique<BatchNorm2d<T>>(ch));
      layers_.push_back(std::make_unique<ReLU<T>>());
      prev = ch;
      if (stride == 2) stride_ *= 2;
    }
  }
  out_channels_ = prev;
}

template <typename T>
TensorT<T> Backbone<T>::forward(const TensorT<T>& x, Mode mode) {
  DCL_CHECK(x.rank() == 4 && x.dim(1) == 3, DataError, "backbone: input must be [B,3,H,W]");
  DCL_CHECK(x.dim(2) == x.dim(3), DataError, "backbone: input must be square");
  DCL_CHECK(x.dim(2) % stride_ == 0, DataError,
            "backbone: input side " + std::to_string(x.dim(2)) +
                " not divisible by stride " + std::to_string(stride_));
  TensorT<T> cur = x;
  for (auto& l : layers_) cur = l->forward(cur, mode);
  return cur;
}

template <typename T>
TensorT<T> Backbone<T>::backward(const TensorT<T>& dy) {
  TensorT<T> cur = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
  return cur;
}

template <typename T>
void Backbone<T>::collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  int conv_i = 0, bn_i = 0;
  for (auto& l : layers_) {
    if (dynamic_cast<Conv3x3<T>*>(l.get()))
      l->collect_params(prefix + ".conv" + std::to_string(conv_i++), out);
    else if (dynamic_cast<BatchNorm2d<T>*>(l.get()))
      l->collect_params(prefix + ".bn" + std::to_string(bn_i++), out);
  }
}

template <typename T>
void Backbone<T>::commit_batch_stats() {
  for (auto& l : layers_) l->commit_batch_stats();
}

template <typename T>
void Backbone<T>::init(Rng& rng) {
  for (auto& l : layers_)
    if (auto* conv = dynamic_cast<Conv3x3<T>*>(l.get())) conv->init(rng);
}

// ---------------- ProjectionMlp ----------------

template <typename T>
ProjectionMlp<T>::ProjectionMlp(int in_dim, int hidden_dim, int out_dim)
    : fc1_(in_dim, hidden_dim), fc2_(hidden_dim, out_dim) {}

template <typename T>
TensorT<T> ProjectionMlp<T>::forward(const TensorT<T>& rows, Mode mode) {
  TensorT<T> h = fc1_.forward(rows, mode);
  h = relu_.forward(h, mode);
  h = fc2_.forward(h, mode);
  return norm_.forward(h, mode);
}

template <typename T>
TensorT<T> ProjectionMlp<T>::backward(const TensorT<T>& dy) {
  TensorT<T> d = norm_.backward(dy);
  d = fc2_.backward(d);
  d = relu_.backward(d);
  return fc1_.backward(d);
}

template <typename T>
void ProjectionMlp<T>::collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  fc1_.collect_params(prefix + ".fc1", out);
  fc2_.collect_params(prefix + ".fc2", out);
}

template <typename T>
void ProjectionMlp<T>::init(Rng& rng) {
  fc1_.init(rng);
  fc2_.init(rng);
}

template <typename T>
int64_t ProjectionMlp<T>::param_count() const {
  return fc1_.weight.numel() + fc1_.bias.numel() + fc2_.weight.numel() + fc2_.bias.numel();
}

// ---------------- Encoder ----------------

template <typename T>
Encoder<T>::Encoder(const EncoderConfig& cfg)
    : cfg_(cfg),
      backbone_(cfg.backbone),
      global_mlp_(backbone_.out_channels(), cfg.hidden_dim, cfg.embed_dim),
      dense_mlp_(backbone_.out_channels(), cfg.hidden_dim, cfg.embed_dim) {
  DCL_CHECK(cfg.hidden_dim >= 1 && cfg.embed_dim >= 1 && cfg.grid_size >= 1, ConfigError,
            "encoder dims must be >= 1");
}

template <typename T>
TensorT<T> Encoder<T>::backbone_forward(const TensorT<T>& views, Mode mode) {
  TensorT<T> f = backbone_.forward(views, mode);
  batch_ = f.dim(0);
  fmap_h_ = static_cast<int>(f.dim(2));
  fmap_w_ = static_cast<int>(f.dim(3));
  return f;
}

template <typename T>
TensorT<T> Encoder<T>::global_head(const TensorT<T>& fmap, Mode mode) {
  TensorT<T> pooled = global_avg_pool(fmap);
  return global_mlp_.forward(pooled, mode);
}

namespace {
// [B,C,S,S] -> rows [B*S*S, C] with cell index i*S+j
template <typename T>
TensorT<T> cells_to_rows(const TensorT<T>& x) {
  const int64_t b = x.dim(0), c = x.dim(1), ss = x.dim(2) * x.dim(3);
  TensorT<T> rows({b * ss, c});
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* src = x.data() + (bi * c + ch) * ss;
      for (int64_t cell = 0; cell < ss; ++cell)
        rows[(bi * ss + cell) * c + ch] = src[cell];
    }
  return rows;
}

template <typename T>
TensorT<T> rows_to_cells(const TensorT<T>& rows, int64_t b, int64_t c, int s) {
  const int64_t ss = static_cast<int64_t>(s) * s;
  TensorT<T> x({b, c, s, s});
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t ch = 0; ch < c; ++ch) {
      T* dst = x.data() + (bi * c + ch) * ss;
      for (int64_t cell = 0; cell < ss; ++cell)
        dst[cell] = rows[(bi * ss + cell) * c + ch];
    }
  return x;
}
}  // namespace

template <typename T>
TensorT<T> Encoder<T>::dense_head(const TensorT<T>& fmap, int grid_s, Mode mode) {
  const int hf = static_cast<int>(fmap.dim(2)), wf = static_cast<int>(fmap.dim(3));
  DCL_CHECK(grid_s >= 1 && grid_s <= std::min(hf, wf), DataError,
            "dense head: grid size " + std::to_string(grid_s) +
                " exceeds feature map spatial size " + std::to_string(std::min(hf, wf)));
  TensorT<T> pooled = adaptive_avg_pool(fmap, grid_s);
  TensorT<T> rows = cells_to_rows(pooled);
  TensorT<T> emb = dense_mlp_.forward(rows, mode);
  emb.reshape({fmap.dim(0), static_cast<int64_t>(grid_s) * grid_s, cfg_.embed_dim});
  if (mode == Mode::train) dense_s_ = grid_s;
  return emb;
}

template <typename T>
TensorT<T> Encoder<T>::heads_backward(const TensorT<T>& d_global, const TensorT<T>& d_dense) {
  const int64_t k = backbone_.out_channels();
  TensorT<T> d_fmap({batch_, k, fmap_h_, fmap_w_});
  if (d_global.numel() > 0) {
    TensorT<T> dpool = global_mlp_.backward(d_global);
    TensorT<T> d = global_avg_pool_backward(dpool, fmap_h_, fmap_w_);
    kernels::axpy(d_fmap.numel(), T(1), d.data(), d_fmap.data());
  }
  if (d_dense.numel() > 0) {
    TensorT<T> flat = d_dense;
    flat.reshape({d_dense.dim(0) * d_dense.dim(1), d_dense.dim(2)});
    TensorT<T> drows = dense_mlp_.backward(flat);
    TensorT<T> dcells = rows_to_cells(drows, batch_, k, dense_s_);
    TensorT<T> d = adaptive_avg_pool_backward(dcells, fmap_h_, fmap_w_);
    kernels::axpy(d_fmap.numel(), T(1), d.data(), d_fmap.data());
  }
  return d_fmap;
}

template <typename T>
TensorT<T> Encoder<T>::backbone_backward(const TensorT<T>& d_fmap) {
  return backbone_.backward(d_fmap);
}

template <typename T>
std::vector<ParamRef<T>> Encoder<T>::params() {
  std::vector<ParamRef<T>> out;
  backbone_.collect_params("backbone", out);
  global_mlp_.collect_params("global", out);
  dense_mlp_.collect_params("dense", out);
  return out;
}

template <typename T>
void Encoder<T>::commit_batch_stats() {
  backbone_.commit_batch_stats();
}

template <typename T>
void Encoder<T>::zero_grads() {
  for (auto& p : params())
    if (p.grad) p.grad->zero();
}

template <typename T>
void Encoder<T>::init(uint64_t seed) {
  Rng rng(derive_seed(seed, 0x1217));
  backbone_.init(rng);
  global_mlp_.init(rng);
  dense_mlp_.init(rng);
}

// ---------------- dense key extraction ----------------

template <typename T>
std::vector<T> pooled_dense_key(const TensorT<T>& cells) {
  const int64_t n = cells.dim(0), e = cells.dim(1);
  DCL_CHECK(n >= 1, DataError, "pooled_dense_key: empty cell grid");
  std::vector<T> mean(static_cast<size_t>(e), T(0));
  for (int64_t r = 0; r < n; ++r)
    kernels::axpy(e, T(1), cells.data() + r * e, mean.data());
  for (auto& v : mean) v /= static_cast<T>(n);
  double norm = std::sqrt(static_cast<double>(kernels::sumsq(mean.data(), e)));
  DCL_CHECK(norm >= 1e-12, NumericError, "pooled_dense_key: degenerate mean vector");
  T inv = static_cast<T>(1.0 / norm);
  for (auto& v : mean) v *= inv;
  return mean;
}

template <typename T>
std::vector<T> sampled_dense_key(const TensorT<T>& cells, Rng& rng) {
  const int64_t n = cells.dim(0), e = cells.dim(1);
  DCL_CHECK(n >= 1, DataError, "sampled_dense_key: empty cell grid");
  int64_t pick = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
  const T* row = cells.data() + pick * e;
  return std::vector<T>(row, row + e);
}

// ---------------- explicit instantiations ----------------

template class Conv3x3<float>;
template class Conv3x3<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class ReLU<float>;
template class ReLU<double>;
template class Linear<float>;
template class Linear<double>;
template class L2NormalizeRows<float>;
template class L2NormalizeRows<double>;
template class Backbone<float>;
template class Backbone<double>;
template class ProjectionMlp<float>;
template class ProjectionMlp<double>;
template class Encoder<float>;
template class Encoder<double>;

template TensorT<float> adaptive_avg_pool(const TensorT<float>&, int);
template TensorT<double> adaptive_avg_pool(const TensorT<double>&, int);
template TensorT<float> adaptive_avg_pool_backward(const TensorT<float>&, int, int);
template TensorT<double> adaptive_avg_pool_backward(const TensorT<double>&, int, int);
template TensorT<float> global_avg_pool(const TensorT<float>&);
template TensorT<double> global_avg_pool(const TensorT<double>&);
template TensorT<float> global_avg_pool_backward(const TensorT<float>&, int, int);
template TensorT<double> global_avg_pool_backward(const TensorT<double>&, int, int);
template std::vector<float> pooled_dense_key(const TensorT<float>&);
template std::vector<double> pooled_dense_key(const TensorT<double>&);
template std::vector<float> sampled_dense_key(const TensorT<float>&, Rng&);
template std::vector<double> sampled_dense_key(const TensorT<double>&, Rng&);

}  // namespace densecl::nn
