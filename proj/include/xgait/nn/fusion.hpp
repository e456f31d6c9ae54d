#pragma once

#include <array>
#include <string>
#include <vector>

#include "xgait/nn/layers.hpp"

namespace xgait::nn {

// Two FC layers with a sigmoid head producing per-channel mixing weights
// for the two representations. Input width 2c, hidden width ceil(2c/r).
template <class S>
class CAGate {
 public:
  CAGate() = default;
  CAGate(std::string name, int channels, int reduction)
      : channels_(channels),
        fc1_(name + ".fc1", 2 * channels, hidden_width(channels, reduction)),
        fc2_(name + ".fc2", hidden_width(channels, reduction), 2 * channels) {}

  static int hidden_width(int channels, int reduction) {
    return std::max(1, (2 * channels + reduction - 1) / reduction);
  }

  void init(Rng& rng) {
    fc1_.init(rng);
    fc2_.init(rng);
  }

  void collect(ParamRefs<S>& refs) {
    fc1_.collect(refs);
    fc2_.collect(refs);
  }

  // d: [N, 2c] pooled descriptors -> gates in (0,1), same shape
  Tensor<S> forward(const Tensor<S>& d) {
    Tensor<S> z = fc2_.forward(relu_.forward(fc1_.forward(d)));
    gate_ = Tensor<S>(z.shape);
    for (size_t i = 0; i < z.numel(); ++i) gate_.v[i] = stable_sigmoid(z.v[i]);
    return gate_;
  }

  Tensor<S> backward(const Tensor<S>& ggate) {
    Tensor<S> gz(ggate.shape);
    for (size_t i = 0; i < ggate.numel(); ++i)
      gz.v[i] = ggate.v[i] * gate_.v[i] * (S(1) - gate_.v[i]);
    return fc1_.backward(relu_.backward(fc2_.backward(gz)));
  }

 private:
  int channels_ = 0;
  Linear<S> fc1_, fc2_;
  ReLU<S> relu_;
  Tensor<S> gate_;
};

// Global fusion: spatially pooled descriptors of both branches gate an
// element-wise weighted sum of the two feature maps.
template <class S>
class GlobalCrossModule {
 public:
  GlobalCrossModule() = default;
  GlobalCrossModule(std::string name, int channels, int reduction, bool per_sequence_gap = false)
      : c_(channels), per_sequence_(per_sequence_gap), ca_(name + ".ca", channels, reduction) {}

  void init(Rng& rng) { ca_.init(rng); }
  void collect(ParamRefs<S>& refs) { ca_.collect(refs); }

  // fs, fp: [c, F, h, w]; t divides F into sequences for the optional
  // sequence-level gate pooling
  Tensor<S> forward(const Tensor<S>& fs, const Tensor<S>& fp, int t) {
    if (fs.shape != fp.shape) throw ShapeMismatch("gcm_forward: operand shapes differ");
    fs_ = fs;
    fp_ = fp;
    t_ = t;
    const int f = fs.dim(1), hw = fs.dim(2) * fs.dim(3);

    Tensor<S> d({f, 2 * c_});
    for (int c = 0; c < c_; ++c)
      for (int fi = 0; fi < f; ++fi) {
        const S* sp = fs.data() + ((size_t)c * f + fi) * hw;
        const S* pp = fp.data() + ((size_t)c * f + fi) * hw;
        S ssum = 0, psum = 0;
        for (int i = 0; i < hw; ++i) {
          ssum += sp[i];
          psum += pp[i];
        }
        d.v[(size_t)fi * 2 * c_ + c] = ssum / (S)hw;
        d.v[(size_t)fi * 2 * c_ + c_ + c] = psum / (S)hw;
      }

    if (per_sequence_) d = pool_descriptors(d, f);
    gates_ = ca_.forward(d);

    Tensor<S> out(fs.shape);
    for (int c = 0; c < c_; ++c)
      for (int fi = 0; fi < f; ++fi) {
        int gi = per_sequence_ ? fi / t_ : fi;
        S g1 = gates_.v[(size_t)gi * 2 * c_ + c];
        S g2 = gates_.v[(size_t)gi * 2 * c_ + c_ + c];
        const S* sp = fs.data() + ((size_t)c * f + fi) * hw;
        const S* pp = fp.data() + ((size_t)c * f + fi) * hw;
        S* op = out.data() + ((size_t)c * f + fi) * hw;
        for (int i = 0; i < hw; ++i) op[i] = g1 * sp[i] + g2 * pp[i];
      }
    return out;
  }

  // accumulates into gfs/gfp
  void backward(const Tensor<S>& gout, Tensor<S>& gfs, Tensor<S>& gfp) {
    const int f = fs_.dim(1), hw = fs_.dim(2) * fs_.dim(3);
    const int n_gate_rows = gates_.dim(0);
    Tensor<S> ggate({n_gate_rows, 2 * c_});
    for (int c = 0; c < c_; ++c)
      for (int fi = 0; fi < f; ++fi) {
        int gi = per_sequence_ ? fi / t_ : fi;
        S g1 = gates_.v[(size_t)gi * 2 * c_ + c];
        S g2 = gates_.v[(size_t)gi * 2 * c_ + c_ + c];
        const S* sp = fs_.data() + ((size_t)c * f + fi) * hw;
        const S* pp = fp_.data() + ((size_t)c * f + fi) * hw;
        const S* go = gout.data() + ((size_t)c * f + fi) * hw;
        S* gs = gfs.data() + ((size_t)c * f + fi) * hw;
        S* gp = gfp.data() + ((size_t)c * f + fi) * hw;
        S acc1 = 0, acc2 = 0;
        for (int i = 0; i < hw; ++i) {
          acc1 += go[i] * sp[i];
          acc2 += go[i] * pp[i];
          gs[i] += g1 * go[i];
          gp[i] += g2 * go[i];
        }
        ggate.v[(size_t)gi * 2 * c_ + c] += acc1;
        ggate.v[(size_t)gi * 2 * c_ + c_ + c] += acc2;
      }

    Tensor<S> gd = ca_.backward(ggate);
    // descriptor gradient flows back through the spatial average
    for (int c = 0; c < c_; ++c)
      for (int fi = 0; fi < f; ++fi) {
        int gi = per_sequence_ ? fi / t_ : fi;
        S seq_scale = per_sequence_ ? S(1) / (S)t_ : S(1);
        S gs_d = gd.v[(size_t)gi * 2 * c_ + c] * seq_scale / (S)hw;
        S gp_d = gd.v[(size_t)gi * 2 * c_ + c_ + c] * seq_scale / (S)hw;
        S* gs = gfs.data() + ((size_t)c * f + fi) * hw;
        S* gp = gfp.data() + ((size_t)c * f + fi) * hw;
        for (int i = 0; i < hw; ++i) {
          gs[i] += gs_d;
          gp[i] += gp_d;
        }
      }
  }

 private:
  Tensor<S> pool_descriptors(const Tensor<S>& d, int f) const {
    int n = f / t_;
    Tensor<S> out({n, 2 * c_});
    for (int ni = 0; ni < n; ++ni)
      for (int j = 0; j < 2 * c_; ++j) {
        S sum = 0;
        for (int ti = 0; ti < t_; ++ti) sum += d.v[((size_t)ni * t_ + ti) * 2 * c_ + j];
        out.v[(size_t)ni * 2 * c_ + j] = sum / (S)t_;
      }
    return out;
  }

  int c_ = 0;
  bool per_sequence_ = false;
  int t_ = 1;
  CAGate<S> ca_;
  Tensor<S> fs_, fp_, gates_;
};

enum class DivisionMode { kSimple, kFixed, kLearnable };

inline const char* to_string(DivisionMode m) {
  switch (m) {
    case DivisionMode::kSimple: return "simple";
    case DivisionMode::kFixed: return "fixed";
    case DivisionMode::kLearnable: return "learnable";
  }
  return "learnable";
}

// Region row ranges of the quarter / half / quarter silhouette split.
struct StripRange {
  int begin = 0;
  int end = 0;
  int rows() const { return end - begin; }
};

inline std::array<StripRange, 3> strip_ranges(int h) {
  if (h < 4) throw HeightTooSmall("strip split needs feature height >= 4");
  int q = h / 4;
  return {StripRange{0, q}, StripRange{q, h - q}, StripRange{h - q, h}};
}

// Standalone soft part masking: gamma * F.M + (1-gamma) * F.(1-M).
// mask is [F, h, w] and broadcast over channels.
template <class S>
Tensor<S> learnable_division(const Tensor<S>& fp, const Tensor<S>& mask, S gamma) {
  const int c = fp.dim(0), f = fp.dim(1);
  const int hw = fp.dim(2) * fp.dim(3);
  if (mask.numel() != (size_t)f * hw)
    throw ShapeMismatch("learnable_division: mask shape must match feature frames");
  Tensor<S> out(fp.shape);
  for (int ci = 0; ci < c; ++ci)
    for (int fi = 0; fi < f; ++fi) {
      const S* xp = fp.data() + ((size_t)ci * f + fi) * hw;
      const S* mp = mask.data() + (size_t)fi * hw;
      S* op = out.data() + ((size_t)ci * f + fi) * hw;
      for (int i = 0; i < hw; ++i)
        op[i] = gamma * xp[i] * mp[i] + (S(1) - gamma) * xp[i] * (S(1) - mp[i]);
    }
  return out;
}

// Part-level fusion: per body region, a silhouette strip and the
// gamma-divided parsing region are pooled (avg+max per modality), gated by
// a region-private CA module and mixed; outputs concatenate over height.
template <class S>
class PartCrossModule {
 public:
  PartCrossModule() = default;
  PartCrossModule(std::string name, int channels, int reduction, DivisionMode mode,
                  double gamma_init)
      : c_(channels), mode_(mode) {
    const char* region_names[3] = {".ca_upper", ".ca_middle", ".ca_down"};
    for (int i = 0; i < 3; ++i) ca_[i] = CAGate<S>(name + region_names[i], channels, reduction);
    gamma_.init_shape(name + ".gamma", {3});
    double g0 = mode == DivisionMode::kSimple ? 1.0
                : mode == DivisionMode::kFixed ? 0.75
                                               : gamma_init;
    std::fill(gamma_.w.v.begin(), gamma_.w.v.end(), (S)g0);
  }

  void init(Rng& rng) {
    for (auto& ca : ca_) ca.init(rng);
  }

  void collect(ParamRefs<S>& refs) {
    for (auto& ca : ca_) ca.collect(refs);
    if (mode_ == DivisionMode::kLearnable) refs.add(gamma_);
  }

  Param<S>& gamma() { return gamma_; }

  // fs, fp: [c, F, h, w]; masks: [3, F, h, w] region masks at feature
  // resolution (constants, no gradient)
  Tensor<S> forward(const Tensor<S>& fs, const Tensor<S>& fp, const Tensor<S>& masks) {
    if (fs.shape != fp.shape) throw ShapeMismatch("pcm_forward: operand shapes differ");
    const int f = fs.dim(1), h = fs.dim(2), w = fs.dim(3);
    if (masks.shape != std::vector<int>{3, f, h, w})
      throw ShapeMismatch("pcm_forward: masks must be [3, F, h, w]");
    fs_ = fs;
    fp_ = fp;
    masks_ = masks;
    auto ranges = strip_ranges(h);

    Tensor<S> out(fs.shape);
    for (int region = 0; region < 3; ++region) {
      const StripRange r = ranges[region];
      const int hi = r.rows();
      const S gamma = gamma_.w.v[region];

      // gamma-divided parsing values on this strip
      p_div_[region] = Tensor<S>({c_, f, hi, w});
      Tensor<S>& pd = p_div_[region];
      for (int ci = 0; ci < c_; ++ci)
        for (int fi = 0; fi < f; ++fi)
          for (int y = 0; y < hi; ++y) {
            const S* xp = fp.data() + (((size_t)ci * f + fi) * h + r.begin + y) * w;
            const S* mp = masks.data() + (((size_t)region * f + fi) * h + r.begin + y) * w;
            S* op = pd.data() + (((size_t)ci * f + fi) * hi + y) * w;
            for (int x = 0; x < w; ++x)
              op[x] = gamma * xp[x] * mp[x] + (S(1) - gamma) * xp[x] * (S(1) - mp[x]);
          }

      // avg+max descriptors of both modalities
      Tensor<S> d({f, 2 * c_});
      s_argmax_[region].assign((size_t)c_ * f, 0);
      p_argmax_[region].assign((size_t)c_ * f, 0);
      const int strip_hw = hi * w;
      for (int ci = 0; ci < c_; ++ci)
        for (int fi = 0; fi < f; ++fi) {
          const S* sp = fs.data() + (((size_t)ci * f + fi) * h + r.begin) * w;
          S smax = sp[0], ssum = 0;
          int sarg = 0;
          for (int i = 0; i < strip_hw; ++i) {
            ssum += sp[i];
            if (sp[i] > smax) {
              smax = sp[i];
              sarg = i;
            }
          }
          const S* pp = pd.data() + ((size_t)ci * f + fi) * strip_hw;
          S pmax = pp[0], psum = 0;
          int parg = 0;
          for (int i = 0; i < strip_hw; ++i) {
            psum += pp[i];
            if (pp[i] > pmax) {
              pmax = pp[i];
              parg = i;
            }
          }
          d.v[(size_t)fi * 2 * c_ + ci] = ssum / (S)strip_hw + smax;
          d.v[(size_t)fi * 2 * c_ + c_ + ci] = psum / (S)strip_hw + pmax;
          s_argmax_[region][(size_t)ci * f + fi] = sarg;
          p_argmax_[region][(size_t)ci * f + fi] = parg;
        }

      gates_[region] = ca_[region].forward(d);

      for (int ci = 0; ci < c_; ++ci)
        for (int fi = 0; fi < f; ++fi) {
          S g1 = gates_[region].v[(size_t)fi * 2 * c_ + ci];
          S g2 = gates_[region].v[(size_t)fi * 2 * c_ + c_ + ci];
          const S* sp = fs.data() + (((size_t)ci * f + fi) * h + r.begin) * w;
          const S* pp = pd.data() + ((size_t)ci * f + fi) * strip_hw;
          S* op = out.data() + (((size_t)ci * f + fi) * h + r.begin) * w;
          for (int i = 0; i < strip_hw; ++i) op[i] = g1 * sp[i] + g2 * pp[i];
        }
    }
    return out;
  }

  // accumulates into gfs / gfp
  void backward(const Tensor<S>& gout, Tensor<S>& gfs, Tensor<S>& gfp) {
    const int f = fs_.dim(1), h = fs_.dim(2), w = fs_.dim(3);
    auto ranges = strip_ranges(h);

    for (int region = 0; region < 3; ++region) {
      const StripRange r = ranges[region];
      const int hi = r.rows();
      const int strip_hw = hi * w;
      const Tensor<S>& pd = p_div_[region];
      const Tensor<S>& gates = gates_[region];

      // gradient wrt the gamma-divided strip, accumulated from the mix
      // and from the pooled descriptors
      Tensor<S> gpd({c_, f, hi, w});
      Tensor<S> ggate({f, 2 * c_});

      for (int ci = 0; ci < c_; ++ci)
        for (int fi = 0; fi < f; ++fi) {
          S g1 = gates.v[(size_t)fi * 2 * c_ + ci];
          S g2 = gates.v[(size_t)fi * 2 * c_ + c_ + ci];
          const S* go = gout.data() + (((size_t)ci * f + fi) * h + r.begin) * w;
          const S* sp = fs_.data() + (((size_t)ci * f + fi) * h + r.begin) * w;
          const S* pp = pd.data() + ((size_t)ci * f + fi) * strip_hw;
          S* gs = gfs.data() + (((size_t)ci * f + fi) * h + r.begin) * w;
          S* gp = gpd.data() + ((size_t)ci * f + fi) * strip_hw;
          S acc1 = 0, acc2 = 0;
          for (int i = 0; i < strip_hw; ++i) {
            acc1 += go[i] * sp[i];
            acc2 += go[i] * pp[i];
            gs[i] += g1 * go[i];
            gp[i] += g2 * go[i];
          }
          ggate.v[(size_t)fi * 2 * c_ + ci] = acc1;
          ggate.v[(size_t)fi * 2 * c_ + c_ + ci] = acc2;
        }

      Tensor<S> gd = ca_[region].backward(ggate);
      for (int ci = 0; ci < c_; ++ci)
        for (int fi = 0; fi < f; ++fi) {
          S gs_d = gd.v[(size_t)fi * 2 * c_ + ci];
          S gp_d = gd.v[(size_t)fi * 2 * c_ + c_ + ci];
          S* gs = gfs.data() + (((size_t)ci * f + fi) * h + r.begin) * w;
          S* gp = gpd.data() + ((size_t)ci * f + fi) * strip_hw;
          for (int i = 0; i < strip_hw; ++i) {
            gs[i] += gs_d / (S)strip_hw;
            gp[i] += gp_d / (S)strip_hw;
          }
          gs[s_argmax_[region][(size_t)ci * f + fi]] += gs_d;
          gp[p_argmax_[region][(size_t)ci * f + fi]] += gp_d;
        }

      // through the division: dP/dFp and dP/dgamma
      const S gamma = gamma_.w.v[region];
      S dgamma = 0;
      for (int ci = 0; ci < c_; ++ci)
        for (int fi = 0; fi < f; ++fi)
          for (int y = 0; y < hi; ++y) {
            const S* xp = fp_.data() + (((size_t)ci * f + fi) * h + r.begin + y) * w;
            const S* mp = masks_.data() + (((size_t)region * f + fi) * h + r.begin + y) * w;
            const S* gp = gpd.data() + (((size_t)ci * f + fi) * hi + y) * w;
            S* gout_p = gfp.data() + (((size_t)ci * f + fi) * h + r.begin + y) * w;
            for (int x = 0; x < w; ++x) {
              S m = mp[x];
              gout_p[x] += gp[x] * (gamma * m + (S(1) - gamma) * (S(1) - m));
              dgamma += gp[x] * xp[x] * (S(2) * m - S(1));
            }
          }
      if (mode_ == DivisionMode::kLearnable) gamma_.g.v[region] += dgamma;
    }
  }

 private:
  int c_ = 0;
  DivisionMode mode_ = DivisionMode::kLearnable;
  std::array<CAGate<S>, 3> ca_;
  Param<S> gamma_;
  Tensor<S> fs_, fp_, masks_;
  std::array<Tensor<S>, 3> p_div_;
  std::array<Tensor<S>, 3> gates_;
  std::array<std::vector<int>, 3> s_argmax_, p_argmax_;
};

// Quarter / half / quarter horizontal split of a feature map; the inverse
// concatenation reconstructs the input exactly.
template <class S>
std::array<Tensor<S>, 3> split_silhouette_strips(const Tensor<S>& fs) {
  const int c = fs.dim(0), f = fs.dim(1), h = fs.dim(2), w = fs.dim(3);
  auto ranges = strip_ranges(h);
  std::array<Tensor<S>, 3> out;
  for (int region = 0; region < 3; ++region) {
    const StripRange r = ranges[region];
    out[region] = Tensor<S>({c, f, r.rows(), w});
    for (int ci = 0; ci < c; ++ci)
      for (int fi = 0; fi < f; ++fi)
        std::copy_n(fs.data() + (((size_t)ci * f + fi) * h + r.begin) * w, (size_t)r.rows() * w,
                    out[region].data() + ((size_t)ci * f + fi) * r.rows() * w);
  }
  return out;
}

template <class S>
Tensor<S> concat_strips(const std::array<Tensor<S>, 3>& strips) {
  const int c = strips[0].dim(0), f = strips[0].dim(1), w = strips[0].dim(3);
  int h = strips[0].dim(2) + strips[1].dim(2) + strips[2].dim(2);
  Tensor<S> out({c, f, h, w});
  int y0 = 0;
  for (const auto& s : strips) {
    const int hi = s.dim(2);
    for (int ci = 0; ci < c; ++ci)
      for (int fi = 0; fi < f; ++fi)
        std::copy_n(s.data() + ((size_t)ci * f + fi) * hi * w, (size_t)hi * w,
                    out.data() + (((size_t)ci * f + fi) * h + y0) * w);
    y0 += hi;
  }
  return out;
}

}  // namespace xgait::nn
