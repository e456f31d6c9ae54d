#pragma once

#include <string>
#include <vector>

#include "xgait/nn/layers.hpp"

namespace xgait::nn {

// ResNet-like per-frame 2D backbone. No temporal mixing: frame order
// commutes with encoding by construction.
struct EncoderConfig {
  int in_channels = 1;
  int stem_channels = 16;
  std::vector<int> stage_channels = {16, 32, 64};
  std::vector<int> stage_strides = {2, 2, 2};
  std::vector<int> blocks_per_stage = {1, 1, 1};
};

template <class S>
class BasicBlock {
 public:
  BasicBlock() = default;
  BasicBlock(std::string name, int in_c, int out_c, int stride)
      : proj_(stride != 1 || in_c != out_c),
        conv1_(name + ".conv1", in_c, out_c, 3, stride, 1),
        bn1_(name + ".bn1", out_c),
        conv2_(name + ".conv2", out_c, out_c, 3, 1, 1),
        bn2_(name + ".bn2", out_c) {
    if (proj_) {
      proj_conv_ = Conv2d<S>(name + ".proj", in_c, out_c, 1, stride, 0);
      proj_bn_ = BatchNorm2d<S>(name + ".proj_bn", out_c);
    }
  }

  void init(Rng& rng) {
    conv1_.init(rng);
    bn1_.init(rng);
    conv2_.init(rng);
    bn2_.init(rng);
    if (proj_) {
      proj_conv_.init(rng);
      proj_bn_.init(rng);
    }
  }

  void collect(ParamRefs<S>& refs) {
    conv1_.collect(refs);
    bn1_.collect(refs);
    conv2_.collect(refs);
    bn2_.collect(refs);
    if (proj_) {
      proj_conv_.collect(refs);
      proj_bn_.collect(refs);
    }
  }

  Tensor<S> forward(const Tensor<S>& x, bool training) {
    Tensor<S> main = relu1_.forward(bn1_.forward(conv1_.forward(x), training));
    main = bn2_.forward(conv2_.forward(main), training);
    Tensor<S> skip = proj_ ? proj_bn_.forward(proj_conv_.forward(x), training) : x;
    for (size_t i = 0; i < main.numel(); ++i) main.v[i] += skip.v[i];
    return relu2_.forward(main);
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    Tensor<S> g = relu2_.backward(gy);
    Tensor<S> gx_main =
        conv1_.backward(bn1_.backward(relu1_.backward(conv2_.backward(bn2_.backward(g)))));
    Tensor<S> gx_skip = proj_ ? proj_conv_.backward(proj_bn_.backward(g)) : std::move(g);
    for (size_t i = 0; i < gx_main.numel(); ++i) gx_main.v[i] += gx_skip.v[i];
    return gx_main;
  }

 private:
  bool proj_ = false;
  Conv2d<S> conv1_;
  BatchNorm2d<S> bn1_;
  Conv2d<S> conv2_;
  BatchNorm2d<S> bn2_;
  Conv2d<S> proj_conv_;
  BatchNorm2d<S> proj_bn_;
  ReLU<S> relu1_, relu2_;
};

template <class S>
class Encoder {
 public:
  Encoder() = default;
  Encoder(std::string name, const EncoderConfig& cfg)
      : cfg_(cfg),
        stem_(name + ".stem", cfg.in_channels, cfg.stem_channels, 3, 1, 1),
        stem_bn_(name + ".stem_bn", cfg.stem_channels) {
    int in_c = cfg.stem_channels;
    for (size_t s = 0; s < cfg.stage_channels.size(); ++s) {
      int out_c = cfg.stage_channels[s];
      int blocks = s < cfg.blocks_per_stage.size() ? cfg.blocks_per_stage[s] : 1;
      for (int b = 0; b < blocks; ++b) {
        int stride = b == 0 ? cfg.stage_strides[s] : 1;
        blocks_.emplace_back(name + ".stage" + std::to_string(s) + ".block" + std::to_string(b),
                             in_c, out_c, stride);
        in_c = out_c;
      }
    }
    out_channels_ = in_c;
  }

  void init(Rng& rng) {
    stem_.init(rng);
    stem_bn_.init(rng);
    for (auto& b : blocks_) b.init(rng);
  }

  void collect(ParamRefs<S>& refs) {
    stem_.collect(refs);
    stem_bn_.collect(refs);
    for (auto& b : blocks_) b.collect(refs);
  }

  Tensor<S> forward(const Tensor<S>& x, bool training) {
    Tensor<S> y = stem_relu_.forward(stem_bn_.forward(stem_.forward(x), training));
    for (auto& b : blocks_) y = b.forward(y, training);
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    Tensor<S> g = gy;
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
    return stem_.backward(stem_bn_.backward(stem_relu_.backward(g)));
  }

  int out_channels() const { return out_channels_; }

  int out_h(int h) const {
    for (int s : cfg_.stage_strides) h = (h + 2 - 3) / s + 1;
    return h;
  }
  int out_w(int w) const { return out_h(w); }

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  Conv2d<S> stem_;
  BatchNorm2d<S> stem_bn_;
  ReLU<S> stem_relu_;
  std::vector<BasicBlock<S>> blocks_;
  int out_channels_ = 0;
};

}  // namespace xgait::nn
