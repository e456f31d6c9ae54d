#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "xgait/nn/blas.hpp"
#include "xgait/nn/tensor.hpp"
#include "xgait/rng.hpp"

namespace xgait::nn {

template <class S>
void he_normal_init(Tensor<S>& w, int fan_in, Rng& rng) {
  double std = std::sqrt(2.0 / fan_in);
  for (auto& x : w.v) x = (S)rng.normal(0.0, std);
}

template <class S>
void xavier_uniform_init(Tensor<S>& w, int fan_in, int fan_out, Rng& rng) {
  double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& x : w.v) x = (S)rng.uniform(-a, a);
}

// 3x3 / 1x1 convolution over [Cin, F, H, W] maps, one GEMM per call.
template <class S>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_c, int out_c, int k, int stride, int pad)
      : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad) {
    w_.init_shape(name + ".w", {out_c, in_c * k * k});
  }

  void init(Rng& rng) { he_normal_init(w_.w, in_c_ * k_ * k_, rng); }
  void collect(ParamRefs<S>& refs) { refs.add(w_); }

  int out_h(int h) const { return (h + 2 * pad_ - k_) / stride_ + 1; }
  int out_w(int w) const { return (w + 2 * pad_ - k_) / stride_ + 1; }

  // One GEMM per frame, every call identically shaped: a frame's output
  // bits do not depend on its position in the batch, so frame order
  // commutes with encoding bit-exactly (batched GEMMs tile the joint
  // matrix and edge tiles round differently).
  Tensor<S> forward(const Tensor<S>& x) {
    x_cache_ = x;
    const int f = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int ho = out_h(h), wo = out_w(w);
    const int kk = in_c_ * k_ * k_;
    Tensor<S> y({out_c_, f, ho, wo});
    Tensor<S> col({kk, ho * wo});
    for (int fi = 0; fi < f; ++fi) {
      im2col_frame(x, fi, ho, wo, col);
      Tensor<S> yf({out_c_, ho * wo});
      gemm(false, false, out_c_, ho * wo, kk, S(1), w_.w.data(), kk, col.data(), ho * wo, S(0),
           yf.data(), ho * wo);
      for (int oc = 0; oc < out_c_; ++oc)
        std::copy_n(yf.data() + (size_t)oc * ho * wo, (size_t)ho * wo,
                    y.data() + ((size_t)oc * f + fi) * ho * wo);
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    const int f = x_cache_.dim(1), h = x_cache_.dim(2), w = x_cache_.dim(3);
    const int ho = gy.dim(2), wo = gy.dim(3);
    const int kk = in_c_ * k_ * k_;
    Tensor<S> gx({in_c_, f, h, w});
    Tensor<S> col({kk, ho * wo});
    Tensor<S> gyf({out_c_, ho * wo});
    Tensor<S> gcol({kk, ho * wo});
    for (int fi = 0; fi < f; ++fi) {
      im2col_frame(x_cache_, fi, ho, wo, col);
      for (int oc = 0; oc < out_c_; ++oc)
        std::copy_n(gy.data() + ((size_t)oc * f + fi) * ho * wo, (size_t)ho * wo,
                    gyf.data() + (size_t)oc * ho * wo);
      // dW += gY_f * col_f^T, accumulated in frame order
      gemm(false, true, out_c_, kk, ho * wo, S(1), gyf.data(), ho * wo, col.data(), ho * wo,
           S(1), w_.g.data(), kk);
      // dcol_f = W^T * gY_f
      gemm(true, false, kk, ho * wo, out_c_, S(1), w_.w.data(), kk, gyf.data(), ho * wo, S(0),
           gcol.data(), ho * wo);
      col2im_frame(gcol, fi, h, w, ho, wo, gx);
    }
    return gx;
  }

 private:
  void im2col_frame(const Tensor<S>& x, int fi, int ho, int wo, Tensor<S>& col) const {
    const int f = x.dim(1), h = x.dim(2), w = x.dim(3);
    S* cp = col.data();
    for (int ci = 0; ci < in_c_; ++ci) {
      const S* plane = x.data() + ((size_t)ci * f + fi) * h * w;
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          S* row = cp + ((size_t)((ci * k_ + ky) * k_ + kx)) * ho * wo;
          for (int oy = 0; oy < ho; ++oy) {
            int iy = oy * stride_ - pad_ + ky;
            S* dst = row + (size_t)oy * wo;
            if (iy < 0 || iy >= h) {
              for (int ox = 0; ox < wo; ++ox) dst[ox] = S(0);
              continue;
            }
            const S* src = plane + (size_t)iy * w;
            for (int ox = 0; ox < wo; ++ox) {
              int ix = ox * stride_ - pad_ + kx;
              dst[ox] = (ix >= 0 && ix < w) ? src[ix] : S(0);
            }
          }
        }
    }
  }

  void col2im_frame(const Tensor<S>& col, int fi, int h, int w, int ho, int wo,
                    Tensor<S>& gx) const {
    const int f = gx.dim(1);
    const S* cp = col.data();
    for (int ci = 0; ci < in_c_; ++ci) {
      S* plane = gx.data() + ((size_t)ci * f + fi) * h * w;
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          const S* row = cp + ((size_t)((ci * k_ + ky) * k_ + kx)) * ho * wo;
          for (int oy = 0; oy < ho; ++oy) {
            int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) continue;
            const S* src = row + (size_t)oy * wo;
            S* dst = plane + (size_t)iy * w;
            for (int ox = 0; ox < wo; ++ox) {
              int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < w) dst[ix] += src[ox];
            }
          }
        }
    }
  }

  int in_c_ = 0, out_c_ = 0, k_ = 3, stride_ = 1, pad_ = 1;
  Param<S> w_;
  Tensor<S> x_cache_;
};

// Per-channel normalization over [C, F, H, W]; batch statistics while
// training, running statistics in eval. Statistics are branch-private.
template <class S>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(std::string name, int channels) : c_(channels) {
    gamma_.init_shape(name + ".gamma", {channels});
    beta_.init_shape(name + ".beta", {channels});
    run_mean_.name = name + ".running_mean";
    run_mean_.w = Tensor<S>({channels});
    run_var_.name = name + ".running_var";
    run_var_.w = Tensor<S>({channels}, S(1));
  }

  void init(Rng&) {
    std::fill(gamma_.w.v.begin(), gamma_.w.v.end(), S(1));
    std::fill(beta_.w.v.begin(), beta_.w.v.end(), S(0));
  }

  void collect(ParamRefs<S>& refs) {
    refs.add(gamma_);
    refs.add(beta_);
    refs.add(run_mean_);
    refs.add(run_var_);
  }

  Tensor<S> forward(const Tensor<S>& x, bool training) {
    const size_t n = x.numel() / c_;
    Tensor<S> y(x.shape);
    xhat_ = Tensor<S>(x.shape);
    invstd_.assign(c_, S(0));
    training_ = training;
    for (int c = 0; c < c_; ++c) {
      const S* xp = x.data() + (size_t)c * n;
      S mean, var;
      if (training) {
        S sum = 0, sq = 0;
        for (size_t i = 0; i < n; ++i) sum += xp[i];
        mean = sum / (S)n;
        for (size_t i = 0; i < n; ++i) {
          S d = xp[i] - mean;
          sq += d * d;
        }
        var = sq / (S)n;
        run_mean_.w.v[c] = (S(1) - momentum_) * run_mean_.w.v[c] + momentum_ * mean;
        run_var_.w.v[c] = (S(1) - momentum_) * run_var_.w.v[c] + momentum_ * var;
      } else {
        mean = run_mean_.w.v[c];
        var = run_var_.w.v[c];
      }
      S inv = S(1) / std::sqrt(var + eps_);
      invstd_[c] = inv;
      S g = gamma_.w.v[c], b = beta_.w.v[c];
      S* hp = xhat_.data() + (size_t)c * n;
      S* yp = y.data() + (size_t)c * n;
      for (size_t i = 0; i < n; ++i) {
        hp[i] = (xp[i] - mean) * inv;
        yp[i] = g * hp[i] + b;
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    const size_t n = gy.numel() / c_;
    Tensor<S> gx(gy.shape);
    for (int c = 0; c < c_; ++c) {
      const S* gp = gy.data() + (size_t)c * n;
      const S* hp = xhat_.data() + (size_t)c * n;
      S* xp = gx.data() + (size_t)c * n;
      S g = gamma_.w.v[c];
      S sum_gy = 0, sum_gy_h = 0;
      for (size_t i = 0; i < n; ++i) {
        sum_gy += gp[i];
        sum_gy_h += gp[i] * hp[i];
      }
      beta_.g.v[c] += sum_gy;
      gamma_.g.v[c] += sum_gy_h;
      if (training_) {
        S scale = g * invstd_[c] / (S)n;
        for (size_t i = 0; i < n; ++i)
          xp[i] = scale * ((S)n * gp[i] - sum_gy - hp[i] * sum_gy_h);
      } else {
        S scale = g * invstd_[c];
        for (size_t i = 0; i < n; ++i) xp[i] = scale * gp[i];
      }
    }
    return gx;
  }

 private:
  int c_ = 0;
  S eps_ = S(1e-5);
  S momentum_ = S(0.1);
  bool training_ = true;
  Param<S> gamma_, beta_;
  Buffer<S> run_mean_, run_var_;
  Tensor<S> xhat_;
  std::vector<S> invstd_;
};

template <class S>
class ReLU {
 public:
  Tensor<S> forward(const Tensor<S>& x) {
    mask_.assign(x.numel(), 0);
    Tensor<S> y(x.shape);
    for (size_t i = 0; i < x.numel(); ++i) {
      if (x.v[i] > S(0)) {
        y.v[i] = x.v[i];
        mask_[i] = 1;
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    Tensor<S> gx(gy.shape);
    for (size_t i = 0; i < gy.numel(); ++i) gx.v[i] = mask_[i] ? gy.v[i] : S(0);
    return gx;
  }

 private:
  std::vector<uint8_t> mask_;
};

// y = x W^T + b over row-major [N, in] -> [N, out]
template <class S>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in, int out, bool bias = true)
      : in_(in), out_(out), bias_(bias) {
    w_.init_shape(name + ".w", {out, in});
    if (bias) b_.init_shape(name + ".b", {out});
  }

  void init(Rng& rng) {
    xavier_uniform_init(w_.w, in_, out_, rng);
    if (bias_) b_.w.zero();
  }

  void collect(ParamRefs<S>& refs) {
    refs.add(w_);
    if (bias_) refs.add(b_);
  }

  // Hand-rolled kernels with a fixed per-element accumulation order: a
  // row's output bits do not depend on which row it is, so per-frame gate
  // descriptors stay frame-permutation equivariant. These matrices are
  // small; the k-major loop vectorizes over the output lane.
  Tensor<S> forward(const Tensor<S>& x) {
    x_cache_ = x;
    int n = (int)(x.numel() / in_);
    Tensor<S> y({n, out_});
    for (int i = 0; i < n; ++i) {
      const S* xp = x.data() + (size_t)i * in_;
      S* yp = y.data() + (size_t)i * out_;
      if (bias_)
        std::copy_n(b_.w.data(), out_, yp);
      for (int k = 0; k < in_; ++k) {
        S xv = xp[k];
        const S* wp = w_.w.data() + k;  // column k of the [out, in] matrix
        for (int o = 0; o < out_; ++o) yp[o] += xv * wp[(size_t)o * in_];
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    int n = (int)(gy.numel() / out_);
    for (int i = 0; i < n; ++i) {
      const S* gp = gy.data() + (size_t)i * out_;
      const S* xp = x_cache_.data() + (size_t)i * in_;
      for (int o = 0; o < out_; ++o) {
        S g = gp[o];
        S* wg = w_.g.data() + (size_t)o * in_;
        for (int k = 0; k < in_; ++k) wg[k] += g * xp[k];
      }
      if (bias_)
        for (int o = 0; o < out_; ++o) b_.g.v[o] += gp[o];
    }
    Tensor<S> gx(x_cache_.shape);
    for (int i = 0; i < n; ++i) {
      const S* gp = gy.data() + (size_t)i * out_;
      S* xg = gx.data() + (size_t)i * in_;
      for (int o = 0; o < out_; ++o) {
        S g = gp[o];
        const S* wp = w_.w.data() + (size_t)o * in_;
        for (int k = 0; k < in_; ++k) xg[k] += g * wp[k];
      }
    }
    return gx;
  }

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Param<S>& weight() { return w_; }

 private:
  int in_ = 0, out_ = 0;
  bool bias_ = true;
  Param<S> w_, b_;
  Tensor<S> x_cache_;
};

template <class S>
inline S stable_sigmoid(S z) {
  if (z >= S(0)) {
    S e = std::exp(-z);
    return S(1) / (S(1) + e);
  }
  S e = std::exp(z);
  return e / (S(1) + e);
}

}  // namespace xgait::nn
