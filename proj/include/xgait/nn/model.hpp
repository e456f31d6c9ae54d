#pragma once

#include <memory>
#include <string>
#include <vector>

#include "xgait/dataset.hpp"
#include "xgait/frames.hpp"
#include "xgait/nn/encoder.hpp"
#include "xgait/nn/fusion.hpp"
#include "xgait/nn/head.hpp"

namespace xgait::nn {

enum class BranchMode { kBoth, kSilOnly, kParOnly };
enum class ParsingInput { kOneHot, kIndex };

struct ModelConfig {
  BranchMode branch = BranchMode::kBoth;
  bool disable_gcm = false;
  bool disable_pcm = false;
  bool share_backbone = false;
  bool share_fmh = false;
  ParsingInput parsing_input = ParsingInput::kOneHot;
  EncoderConfig encoder;  // in_channels is set per branch
  HpmConfig hpm;
  int reduction_ratio = 16;
  DivisionMode division = DivisionMode::kLearnable;
  double gamma_init = 1.0;
  bool per_sequence_gap = false;
  int n_classes = 0;  // 0 disables the classifier

  bool use_gcm() const { return branch == BranchMode::kBoth && !disable_gcm; }
  bool use_pcm() const { return branch == BranchMode::kBoth && !disable_pcm; }
  int parsing_channels() const { return parsing_input == ParsingInput::kOneHot ? kNumParsingLabels : 1; }
};

template <class S>
struct ModelInputs {
  Tensor<S> sil;    // [1, F, 64, 44]
  Tensor<S> par;    // [12 or 1, F, 64, 44]
  Tensor<S> masks;  // [3, F, h, w], constants
  int n = 0;        // sequences
  int t = 0;        // frames per sequence
};

// Builds encoder inputs and feature-resolution region masks from a batch.
template <class S>
ModelInputs<S> build_inputs(const Batch& batch, const ModelConfig& cfg, int feat_h, int feat_w) {
  const int f = batch.n_frames();
  const size_t px = (size_t)kAlignedH * kAlignedW;
  ModelInputs<S> in;
  in.n = batch.n_seqs();
  in.t = batch.t;

  in.sil = Tensor<S>({1, f, kAlignedH, kAlignedW});
  for (size_t i = 0; i < (size_t)f * px; ++i) in.sil.v[i] = (S)batch.sil[i];

  const int pc = cfg.parsing_channels();
  in.par = Tensor<S>({pc, f, kAlignedH, kAlignedW});
  if (cfg.parsing_input == ParsingInput::kOneHot) {
    for (int fi = 0; fi < f; ++fi)
      for (size_t i = 0; i < px; ++i) {
        uint8_t lab = batch.par[(size_t)fi * px + i];
        in.par.v[((size_t)lab * f + fi) * px + i] = S(1);
      }
  } else {
    for (size_t i = 0; i < (size_t)f * px; ++i)
      in.par.v[i] = (S)batch.par[i] / (S)(kNumParsingLabels - 1);
  }

  in.masks = Tensor<S>({3, f, feat_h, feat_w});
  for (int fi = 0; fi < f; ++fi) {
    ParsingFrame pf;
    pf.labels = ByteGrid(kAlignedH, kAlignedW);
    std::copy_n(batch.par.data() + (size_t)fi * px, px, pf.labels.v.data());
    RegionMasks rm = region_masks(pf);
    const ByteGrid* grids[3] = {&rm.upper, &rm.middle, &rm.lower};
    for (int region = 0; region < 3; ++region) {
      ByteGrid small = downsample_mask(*grids[region], feat_h, feat_w);
      for (int i = 0; i < feat_h * feat_w; ++i)
        in.masks.v[((size_t)region * f + fi) * feat_h * feat_w + i] = (S)small.v[i];
    }
  }
  return in;
}

// The full recognizer: two encoders, global and part cross-granularity
// fusion, four feature mapping heads and per-strip classifiers.
template <class S>
class XGaitModel {
 public:
  explicit XGaitModel(const ModelConfig& cfg) : cfg_(cfg) {
    if (cfg.share_backbone && cfg.branch == BranchMode::kBoth &&
        cfg.parsing_input != ParsingInput::kIndex)
      throw UsageError("share_backbone requires parsing_input=index (equal channel counts)");

    EncoderConfig ec = cfg.encoder;
    if (use_sil() || cfg.share_backbone) {
      ec.in_channels = 1;
      enc_s_ = std::make_unique<Encoder<S>>("encoder_s", ec);
    }
    if (use_par() && !cfg.share_backbone) {
      ec.in_channels = cfg.parsing_channels();
      enc_p_ = std::make_unique<Encoder<S>>("encoder_p", ec);
    }
    if (cfg.branch == BranchMode::kParOnly && cfg.share_backbone)
      throw UsageError("share_backbone is meaningless for a single-branch model");

    const Encoder<S>& ref = enc_s_ ? *enc_s_ : *enc_p_;
    c_ = ref.out_channels();
    h_ = ref.out_h(kAlignedH);
    w_ = ref.out_w(kAlignedW);

    if (cfg.use_gcm())
      gcm_ = std::make_unique<GlobalCrossModule<S>>("gcm", c_, cfg.reduction_ratio,
                                                    cfg.per_sequence_gap);
    if (cfg.use_pcm())
      pcm_ = std::make_unique<PartCrossModule<S>>("pcm", c_, cfg.reduction_ratio, cfg.division,
                                                  cfg.gamma_init);

    if (cfg.share_fmh) {
      fmh_shared_ = std::make_unique<Fmh<S>>("fmh", c_, h_, cfg.hpm);
    } else {
      for (const char* head : head_names())
        fmhs_.push_back(std::make_unique<Fmh<S>>(std::string("fmh_") + head, c_, h_, cfg.hpm));
    }

    if (cfg.n_classes > 0) {
      const int rows = embedding_rows();
      for (int r = 0; r < rows; ++r)
        classifiers_.emplace_back("classifier.row" + std::to_string(r), cfg.hpm.out_dim,
                                  cfg.n_classes, /*bias=*/true);
    }
  }

  const ModelConfig& config() const { return cfg_; }
  int feat_channels() const { return c_; }
  int feat_h() const { return h_; }
  int feat_w() const { return w_; }
  int n_heads() const { return (int)head_names().size(); }
  int embedding_rows() const { return n_heads() * cfg_.hpm.n_strips(); }

  std::vector<const char*> head_names() const {
    std::vector<const char*> names;
    if (use_sil()) names.push_back("s");
    if (use_par()) names.push_back("p");
    if (cfg_.use_gcm()) names.push_back("ga");
    if (cfg_.use_pcm()) names.push_back("pa");
    return names;
  }

  void init(uint64_t seed) {
    Rng rng(seed);
    if (enc_s_) enc_s_->init(rng);
    if (enc_p_) enc_p_->init(rng);
    if (gcm_) gcm_->init(rng);
    if (pcm_) pcm_->init(rng);
    if (fmh_shared_) fmh_shared_->init(rng);
    for (auto& f : fmhs_) f->init(rng);
    for (auto& c : classifiers_) c.init(rng);
  }

  ParamRefs<S> collect() {
    ParamRefs<S> refs;
    if (enc_s_) enc_s_->collect(refs);
    if (enc_p_) enc_p_->collect(refs);
    if (gcm_) gcm_->collect(refs);
    if (pcm_) pcm_->collect(refs);
    if (fmh_shared_) fmh_shared_->collect(refs);
    for (auto& f : fmhs_) f->collect(refs);
    for (auto& c : classifiers_) c.collect(refs);
    return refs;
  }

  // -> embedding [N, rows, d]
  Tensor<S> forward(const ModelInputs<S>& in, bool training) {
    n_ = in.n;
    t_ = in.t;
    const int f = in.n * in.t;

    if (cfg_.share_backbone && cfg_.branch == BranchMode::kBoth) {
      Tensor<S> joint = concat_frames({&in.sil, &in.par});
      Tensor<S> both = enc_s_->forward(joint, training);
      auto parts = split_frames(both, {f, f});
      fs_ = std::move(parts[0]);
      fp_ = std::move(parts[1]);
    } else {
      if (use_sil()) fs_ = enc_s_->forward(in.sil, training);
      if (use_par()) fp_ = enc_p_->forward(in.par, training);
    }

    if (cfg_.use_gcm()) fga_ = gcm_->forward(fs_, fp_, in.t);
    if (cfg_.use_pcm()) fpa_ = pcm_->forward(fs_, fp_, in.masks);

    std::vector<const Tensor<S>*> maps = head_maps();
    std::vector<Tensor<S>> embs;
    if (cfg_.share_fmh) {
      Tensor<S> joint = concat_frames(maps);
      Tensor<S> e = fmh_shared_->forward(joint, (int)maps.size() * n_, t_);
      embs = split_embedding_rows(e, (int)maps.size());
    } else {
      for (size_t i = 0; i < maps.size(); ++i) embs.push_back(fmhs_[i]->forward(*maps[i], n_, t_));
    }
    std::vector<const Tensor<S>*> emb_ptrs;
    for (const auto& e : embs) emb_ptrs.push_back(&e);
    return assemble_output(emb_ptrs);
  }

  // per-strip logits [N, rows, n_classes]
  Tensor<S> classify(const Tensor<S>& emb) {
    const int n = emb.dim(0), rows = emb.dim(1), d = emb.dim(2);
    Tensor<S> logits({n, rows, cfg_.n_classes});
    for (int r = 0; r < rows; ++r) {
      Tensor<S> slice({n, d});
      for (int ni = 0; ni < n; ++ni)
        std::copy_n(emb.data() + ((size_t)ni * rows + r) * d, d, slice.data() + (size_t)ni * d);
      Tensor<S> lg = classifiers_[r].forward(slice);
      for (int ni = 0; ni < n; ++ni)
        std::copy_n(lg.data() + (size_t)ni * cfg_.n_classes, cfg_.n_classes,
                    logits.data() + ((size_t)ni * rows + r) * cfg_.n_classes);
    }
    return logits;
  }

  // returns d loss / d embedding for the classifier path
  Tensor<S> classifier_backward(const Tensor<S>& glogits) {
    const int n = glogits.dim(0), rows = glogits.dim(1);
    const int d = cfg_.hpm.out_dim;
    Tensor<S> gemb({n, rows, d});
    for (int r = 0; r < rows; ++r) {
      Tensor<S> gl({n, cfg_.n_classes});
      for (int ni = 0; ni < n; ++ni)
        std::copy_n(glogits.data() + ((size_t)ni * rows + r) * cfg_.n_classes, cfg_.n_classes,
                    gl.data() + (size_t)ni * cfg_.n_classes);
      Tensor<S> gs = classifiers_[r].backward(gl);
      for (int ni = 0; ni < n; ++ni)
        std::copy_n(gs.data() + (size_t)ni * d, d, gemb.data() + ((size_t)ni * rows + r) * d);
    }
    return gemb;
  }

  void backward(const Tensor<S>& gemb) {
    const int strips = cfg_.hpm.n_strips();
    const int heads = n_heads();
    std::vector<Tensor<S>> ghead(heads);
    const int n = gemb.dim(0), d = gemb.dim(2);
    for (int hi = 0; hi < heads; ++hi) {
      ghead[hi] = Tensor<S>({n, strips, d});
      for (int ni = 0; ni < n; ++ni)
        std::copy_n(gemb.data() + ((size_t)ni * heads * strips + (size_t)hi * strips) * d,
                    (size_t)strips * d, ghead[hi].data() + (size_t)ni * strips * d);
    }

    std::vector<Tensor<S>> gmaps(heads);
    if (cfg_.share_fmh) {
      Tensor<S> joint({(int)(heads * n), strips, d});
      for (int hi = 0; hi < heads; ++hi)
        std::copy_n(ghead[hi].data(), ghead[hi].numel(),
                    joint.data() + (size_t)hi * n * strips * d);
      Tensor<S> gall = fmh_shared_->backward(joint);
      std::vector<int> sizes(heads, n_ * t_);
      auto parts = split_frames(gall, sizes);
      for (int hi = 0; hi < heads; ++hi) gmaps[hi] = std::move(parts[hi]);
    } else {
      for (int hi = 0; hi < heads; ++hi) gmaps[hi] = fmhs_[hi]->backward(ghead[hi]);
    }

    Tensor<S> gfs, gfp;
    if (use_sil()) gfs = Tensor<S>(fs_.shape);
    if (use_par()) gfp = Tensor<S>(fp_.shape);

    int idx = 0;
    if (use_sil()) accumulate(gfs, gmaps[idx++]);
    if (use_par()) accumulate(gfp, gmaps[idx++]);
    if (cfg_.use_gcm()) gcm_->backward(gmaps[idx++], gfs, gfp);
    if (cfg_.use_pcm()) pcm_->backward(gmaps[idx++], gfs, gfp);

    if (cfg_.share_backbone && cfg_.branch == BranchMode::kBoth) {
      Tensor<S> joint = concat_frames({&gfs, &gfp});
      enc_s_->backward(joint);
    } else {
      if (use_sil()) enc_s_->backward(gfs);
      if (use_par()) enc_p_->backward(gfp);
    }
  }

  // captured feature maps of the last forward, keyed like head_names()
  const Tensor<S>& map_s() const { return fs_; }
  const Tensor<S>& map_p() const { return fp_; }
  const Tensor<S>& map_ga() const { return fga_; }
  const Tensor<S>& map_pa() const { return fpa_; }

  PartCrossModule<S>* pcm() { return pcm_.get(); }

 private:
  bool use_sil() const { return cfg_.branch != BranchMode::kParOnly; }
  bool use_par() const { return cfg_.branch != BranchMode::kSilOnly; }

  std::vector<const Tensor<S>*> head_maps() const {
    std::vector<const Tensor<S>*> maps;
    if (use_sil()) maps.push_back(&fs_);
    if (use_par()) maps.push_back(&fp_);
    if (cfg_.use_gcm()) maps.push_back(&fga_);
    if (cfg_.use_pcm()) maps.push_back(&fpa_);
    return maps;
  }

  static void accumulate(Tensor<S>& dst, const Tensor<S>& src) {
    for (size_t i = 0; i < dst.numel(); ++i) dst.v[i] += src.v[i];
  }

  static Tensor<S> concat_frames(const std::vector<const Tensor<S>*>& xs) {
    const int c = xs[0]->dim(0), h = xs[0]->dim(2), w = xs[0]->dim(3);
    int f_total = 0;
    for (const auto* x : xs) f_total += x->dim(1);
    Tensor<S> out({c, f_total, h, w});
    const size_t hw = (size_t)h * w;
    for (int ci = 0; ci < c; ++ci) {
      size_t off = 0;
      for (const auto* x : xs) {
        const int f = x->dim(1);
        std::copy_n(x->data() + (size_t)ci * f * hw, (size_t)f * hw,
                    out.data() + ((size_t)ci * f_total) * hw + off);
        off += (size_t)f * hw;
      }
    }
    return out;
  }

  static std::vector<Tensor<S>> split_frames(const Tensor<S>& x, const std::vector<int>& sizes) {
    const int c = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int f_total = x.dim(1);
    const size_t hw = (size_t)h * w;
    std::vector<Tensor<S>> out;
    size_t off = 0;
    for (int f : sizes) {
      Tensor<S> part({c, f, h, w});
      for (int ci = 0; ci < c; ++ci)
        std::copy_n(x.data() + (size_t)ci * f_total * hw + off, (size_t)f * hw,
                    part.data() + (size_t)ci * f * hw);
      out.push_back(std::move(part));
      off += (size_t)f * hw;
    }
    return out;
  }

  // [heads*N, strips, d] -> per-head [N, strips, d]
  static std::vector<Tensor<S>> split_embedding_rows(const Tensor<S>& e, int heads) {
    const int total = e.dim(0), strips = e.dim(1), d = e.dim(2);
    const int n = total / heads;
    std::vector<Tensor<S>> out;
    for (int hi = 0; hi < heads; ++hi) {
      Tensor<S> part({n, strips, d});
      std::copy_n(e.data() + (size_t)hi * n * strips * d, (size_t)n * strips * d, part.data());
      out.push_back(std::move(part));
    }
    return out;
  }

  ModelConfig cfg_;
  int c_ = 0, h_ = 0, w_ = 0;
  int n_ = 0, t_ = 0;
  std::unique_ptr<Encoder<S>> enc_s_, enc_p_;
  std::unique_ptr<GlobalCrossModule<S>> gcm_;
  std::unique_ptr<PartCrossModule<S>> pcm_;
  std::unique_ptr<Fmh<S>> fmh_shared_;
  std::vector<std::unique_ptr<Fmh<S>>> fmhs_;
  std::vector<Linear<S>> classifiers_;
  Tensor<S> fs_, fp_, fga_, fpa_;
};

}  // namespace xgait::nn
