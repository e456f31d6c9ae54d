#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "xgait/nn/layers.hpp"

namespace xgait::nn {

// Temporal max over the T axis of [c, N*T, h, w] -> [c, N, h, w].
// Exactly permutation invariant; gradient routes to the first argmax.
template <class S>
class SetPool {
 public:
  Tensor<S> forward(const Tensor<S>& x, int n, int t) {
    const int c = x.dim(0), h = x.dim(2), w = x.dim(3);
    n_ = n;
    t_ = t;
    Tensor<S> y({c, n, h, w});
    argmax_.assign(y.numel(), 0);
    const int hw = h * w;
    for (int ci = 0; ci < c; ++ci)
      for (int ni = 0; ni < n; ++ni) {
        S* yp = y.data() + ((size_t)ci * n + ni) * hw;
        int* ap = argmax_.data() + ((size_t)ci * n + ni) * hw;
        for (int ti = 0; ti < t; ++ti) {
          const S* xp = x.data() + ((size_t)ci * (n * t) + (size_t)ni * t + ti) * hw;
          if (ti == 0) {
            for (int i = 0; i < hw; ++i) {
              yp[i] = xp[i];
              ap[i] = 0;
            }
          } else {
            for (int i = 0; i < hw; ++i)
              if (xp[i] > yp[i]) {
                yp[i] = xp[i];
                ap[i] = ti;
              }
          }
        }
      }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    const int c = gy.dim(0), h = gy.dim(2), w = gy.dim(3);
    const int hw = h * w;
    Tensor<S> gx({c, n_ * t_, h, w});
    for (int ci = 0; ci < c; ++ci)
      for (int ni = 0; ni < n_; ++ni) {
        const S* gp = gy.data() + ((size_t)ci * n_ + ni) * hw;
        const int* ap = argmax_.data() + ((size_t)ci * n_ + ni) * hw;
        for (int i = 0; i < hw; ++i) {
          size_t dst = ((size_t)ci * (n_ * t_) + (size_t)ni * t_ + ap[i]) * hw + i;
          gx.v[dst] += gp[i];
        }
      }
    return gx;
  }

 private:
  int n_ = 0, t_ = 0;
  std::vector<int> argmax_;
};

struct HpmConfig {
  std::vector<int> scales = {1, 2, 4};  // strip counts per pyramid level
  int out_dim = 64;                     // per-strip embedding width

  int n_strips() const { return std::accumulate(scales.begin(), scales.end(), 0); }
};

// Horizontal Pyramid Mapping: per pyramid scale, equal-height strips are
// pooled (max + mean over the strip) and mapped by a strip-private FC.
template <class S>
class Hpm {
 public:
  Hpm() = default;
  Hpm(std::string name, int channels, int h, const HpmConfig& cfg) : c_(channels), h_(h), cfg_(cfg) {
    for (int s : cfg.scales)
      if (s <= 0 || h % s != 0)
        throw ScaleError("hpm: every pyramid scale must divide the feature height");
    int idx = 0;
    for (int s : cfg.scales)
      for (int j = 0; j < s; ++j)
        fcs_.emplace_back(name + ".strip" + std::to_string(idx++) + ".fc", channels, cfg.out_dim,
                          /*bias=*/false);
  }

  void init(Rng& rng) {
    for (auto& fc : fcs_) fc.init(rng);
  }

  void collect(ParamRefs<S>& refs) {
    for (auto& fc : fcs_) fc.collect(refs);
  }

  int n_strips() const { return (int)fcs_.size(); }

  // x: [c, N, h, w] -> [N, n_strips, d]
  Tensor<S> forward(const Tensor<S>& x) {
    const int n = x.dim(1), w = x.dim(3);
    n_ = n;
    w_ = w;
    const int strips = n_strips();
    pooled_ = Tensor<S>({strips, n, c_});
    argmax_.assign((size_t)strips * n * c_, 0);

    int strip = 0;
    for (int s : cfg_.scales) {
      int rows = h_ / s;
      for (int j = 0; j < s; ++j, ++strip) {
        int y0 = j * rows;
        for (int ci = 0; ci < c_; ++ci)
          for (int ni = 0; ni < n; ++ni) {
            const S* xp = x.data() + (((size_t)ci * n + ni) * h_ + y0) * w;
            S mx = xp[0], sum = 0;
            int arg = 0;
            for (int i = 0; i < rows * w; ++i) {
              sum += xp[i];
              if (xp[i] > mx) {
                mx = xp[i];
                arg = i;
              }
            }
            pooled_.v[((size_t)strip * n + ni) * c_ + ci] = mx + sum / (S)(rows * w);
            argmax_[((size_t)strip * n + ni) * c_ + ci] = arg;
          }
      }
    }

    Tensor<S> out({n, strips, cfg_.out_dim});
    for (int si = 0; si < strips; ++si) {
      Tensor<S> slice({n, c_});
      std::copy_n(pooled_.data() + (size_t)si * n * c_, (size_t)n * c_, slice.data());
      Tensor<S> e = fcs_[si].forward(slice);
      for (int ni = 0; ni < n; ++ni)
        std::copy_n(e.data() + (size_t)ni * cfg_.out_dim, cfg_.out_dim,
                    out.data() + ((size_t)ni * strips + si) * cfg_.out_dim);
    }
    return out;
  }

  // gy: [N, n_strips, d] -> gx: [c, N, h, w]
  Tensor<S> backward(const Tensor<S>& gy) {
    const int n = n_, w = w_;
    const int strips = n_strips();
    Tensor<S> gx({c_, n, h_, w});

    int strip = 0;
    for (size_t level = 0; level < cfg_.scales.size(); ++level) {
      int s = cfg_.scales[level];
      int rows = h_ / s;
      for (int j = 0; j < s; ++j, ++strip) {
        Tensor<S> ge({n, cfg_.out_dim});
        for (int ni = 0; ni < n; ++ni)
          std::copy_n(gy.data() + ((size_t)ni * strips + strip) * cfg_.out_dim, cfg_.out_dim,
                      ge.data() + (size_t)ni * cfg_.out_dim);
        Tensor<S> gpooled = fcs_[strip].backward(ge);  // [n, c]
        int y0 = j * rows;
        for (int ci = 0; ci < c_; ++ci)
          for (int ni = 0; ni < n; ++ni) {
            S g = gpooled.v[(size_t)ni * c_ + ci];
            S* xp = gx.data() + (((size_t)ci * n + ni) * h_ + y0) * w;
            S mean_g = g / (S)(rows * w);
            for (int i = 0; i < rows * w; ++i) xp[i] += mean_g;
            xp[argmax_[((size_t)strip * n + ni) * c_ + ci]] += g;
          }
      }
    }
    return gx;
  }

 private:
  int c_ = 0, h_ = 0;
  HpmConfig cfg_;
  std::vector<Linear<S>> fcs_;
  Tensor<S> pooled_;
  std::vector<int> argmax_;
  int n_ = 0, w_ = 0;
};

// Feature Mapping Head: Set Pooling followed by HPM.
template <class S>
class Fmh {
 public:
  Fmh() = default;
  Fmh(std::string name, int channels, int h, const HpmConfig& cfg)
      : hpm_(name + ".hpm", channels, h, cfg) {}

  void init(Rng& rng) { hpm_.init(rng); }
  void collect(ParamRefs<S>& refs) { hpm_.collect(refs); }
  int n_strips() const { return hpm_.n_strips(); }

  // x: [c, N*T, h, w] -> [N, n_strips, d]
  Tensor<S> forward(const Tensor<S>& x, int n, int t) { return hpm_.forward(sp_.forward(x, n, t)); }

  Tensor<S> backward(const Tensor<S>& gy) { return sp_.backward(hpm_.backward(gy)); }

 private:
  SetPool<S> sp_;
  Hpm<S> hpm_;
};

// Row-stacks per-head embeddings in the fixed (s, p, ga, pa) order.
template <class S>
Tensor<S> assemble_output(const std::vector<const Tensor<S>*>& heads) {
  if (heads.empty()) throw ShapeMismatch("assemble_output: no embeddings");
  const int n = heads[0]->dim(0), d = heads[0]->dim(2);
  int rows = 0;
  for (const auto* e : heads) {
    if (e->dim(0) != n || e->dim(2) != d)
      throw ShapeMismatch("assemble_output: embedding dims differ");
    rows += e->dim(1);
  }
  Tensor<S> out({n, rows, d});
  for (int ni = 0; ni < n; ++ni) {
    int r0 = 0;
    for (const auto* e : heads) {
      int r = e->dim(1);
      std::copy_n(e->data() + (size_t)ni * r * d, (size_t)r * d,
                  out.data() + ((size_t)ni * rows + r0) * d);
      r0 += r;
    }
  }
  return out;
}

}  // namespace xgait::nn
