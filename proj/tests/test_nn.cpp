#include <doctest.h>

#include "testutil.hpp"
#include "xgait/nn/encoder.hpp"
#include "xgait/nn/layers.hpp"

using namespace xgait;
using namespace xgait::nn;
using xgait::testutil::fill_normal;
using xgait::testutil::rel_err;

namespace {

// direct convolution oracle over the [C, F, H, W] layout
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, int out_c, int k,
                           int stride, int pad) {
  const int in_c = x.dim(0), f = x.dim(1), h = x.dim(2), ww = x.dim(3);
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (ww + 2 * pad - k) / stride + 1;
  Tensor<double> y({out_c, f, ho, wo});
  for (int oc = 0; oc < out_c; ++oc)
    for (int fi = 0; fi < f; ++fi)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = 0.0;
          for (int ic = 0; ic < in_c; ++ic)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                int iy = oy * stride - pad + ky;
                int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= ww) continue;
                acc += w.v[((size_t)oc * in_c + ic) * k * k + ky * k + kx] *
                       x.v[(((size_t)ic * f + fi) * h + iy) * ww + ix];
              }
          y.v[(((size_t)oc * f + fi) * ho + oy) * wo + ox] = acc;
        }
  return y;
}

}  // namespace

TEST_CASE("conv2d matches the direct convolution oracle") {
  Rng rng(21);
  for (int stride : {1, 2}) {
    Conv2d<double> conv("conv", 3, 5, 3, stride, 1);
    conv.init(rng);
    Tensor<double> x({3, 4, 10, 7});
    fill_normal(x, rng);
    Tensor<double> y = conv.forward(x);

    ParamRefs<double> refs;
    conv.collect(refs);
    Tensor<double> expect = conv_oracle(x, refs.params[0]->w, 5, 3, stride, 1);
    REQUIRE(y.shape == expect.shape);
    for (size_t i = 0; i < y.numel(); ++i) CHECK(rel_err(y.v[i], expect.v[i]) < 1e-10);
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(22);
  Conv2d<double> conv("conv", 2, 4, 3, 2, 1);
  conv.init(rng);
  Tensor<double> x({2, 3, 8, 6});
  fill_normal(x, rng);
  Tensor<double> r;  // fixed projection makes the loss scalar
  {
    Tensor<double> y = conv.forward(x);
    r = Tensor<double>(y.shape);
    fill_normal(r, rng);
  }
  auto loss = [&]() {
    Tensor<double> y = conv.forward(x);
    double acc = 0;
    for (size_t i = 0; i < y.numel(); ++i) acc += y.v[i] * r.v[i];
    return acc;
  };
  loss();
  Tensor<double> gx = conv.backward(r);

  ParamRefs<double> refs;
  conv.collect(refs);
  testutil::GradCheckReport rep;
  testutil::fd_check_tensor(*refs.params[0], loss, 20, rng, rep);
  CHECK_MESSAGE(rep.max_rel_err < 1e-6, rep.worst);

  // input gradient
  double eps = 1e-6;
  for (int probe = 0; probe < 20; ++probe) {
    size_t i = rng.randint(x.numel());
    double keep = x.v[i];
    x.v[i] = keep + eps;
    double up = loss();
    x.v[i] = keep - eps;
    double dn = loss();
    x.v[i] = keep;
    CHECK(rel_err(gx.v[i], (up - dn) / (2 * eps)) < 1e-6);
  }
}

TEST_CASE("batchnorm normalizes and backpropagates correctly") {
  Rng rng(23);
  BatchNorm2d<double> bn("bn", 3);
  bn.init(rng);
  Tensor<double> x({3, 4, 5, 2});
  fill_normal(x, rng, 2.0);
  for (auto& v : x.v) v += 1.5;

  Tensor<double> y = bn.forward(x, true);
  const size_t n = x.numel() / 3;
  for (int c = 0; c < 3; ++c) {
    double mean = 0, var = 0;
    for (size_t i = 0; i < n; ++i) mean += y.v[(size_t)c * n + i];
    mean /= n;
    for (size_t i = 0; i < n; ++i) {
      double d = y.v[(size_t)c * n + i] - mean;
      var += d * d;
    }
    var /= n;
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(var - 1.0) < 1e-4);  // eps shrinks the variance slightly
  }

  Tensor<double> r(y.shape);
  fill_normal(r, rng);
  auto loss = [&]() {
    Tensor<double> out = bn.forward(x, true);
    double acc = 0;
    for (size_t i = 0; i < out.numel(); ++i) acc += out.v[i] * r.v[i];
    return acc;
  };
  loss();
  Tensor<double> gx = bn.backward(r);

  double eps = 1e-6;
  for (int probe = 0; probe < 20; ++probe) {
    size_t i = rng.randint(x.numel());
    double keep = x.v[i];
    x.v[i] = keep + eps;
    double up = loss();
    x.v[i] = keep - eps;
    double dn = loss();
    x.v[i] = keep;
    CHECK(rel_err(gx.v[i], (up - dn) / (2 * eps)) < 1e-5);
  }

  ParamRefs<double> refs;
  bn.collect(refs);
  testutil::GradCheckReport rep;
  for (auto* p : refs.params) testutil::fd_check_tensor(*p, loss, 3, rng, rep);
  CHECK_MESSAGE(rep.max_rel_err < 1e-6, rep.worst);
}

TEST_CASE("batchnorm eval mode uses running statistics per frame") {
  Rng rng(24);
  BatchNorm2d<double> bn("bn", 2);
  bn.init(rng);
  Tensor<double> x({2, 6, 4, 3});
  fill_normal(x, rng);
  bn.forward(x, true);  // populate running stats

  Tensor<double> one_frame({2, 1, 4, 3});
  for (int c = 0; c < 2; ++c)
    std::copy_n(x.data() + (size_t)c * 6 * 12, 12, one_frame.data() + (size_t)c * 12);
  Tensor<double> full = bn.forward(x, false);
  Tensor<double> single = bn.forward(one_frame, false);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 12; ++i)
      CHECK(full.v[(size_t)c * 72 + i] == single.v[(size_t)c * 12 + i]);
}

TEST_CASE("linear matches finite differences") {
  Rng rng(25);
  Linear<double> fc("fc", 7, 4);
  fc.init(rng);
  Tensor<double> x({5, 7});
  fill_normal(x, rng);
  Tensor<double> r({5, 4});
  fill_normal(r, rng);
  auto loss = [&]() {
    Tensor<double> y = fc.forward(x);
    double acc = 0;
    for (size_t i = 0; i < y.numel(); ++i) acc += y.v[i] * r.v[i];
    return acc;
  };
  loss();
  Tensor<double> gx = fc.backward(r);

  ParamRefs<double> refs;
  fc.collect(refs);
  testutil::GradCheckReport rep;
  for (auto* p : refs.params) testutil::fd_check_tensor(*p, loss, 10, rng, rep);
  CHECK_MESSAGE(rep.max_rel_err < 1e-7, rep.worst);

  double eps = 1e-6;
  for (int probe = 0; probe < 10; ++probe) {
    size_t i = rng.randint(x.numel());
    double keep = x.v[i];
    x.v[i] = keep + eps;
    double up = loss();
    x.v[i] = keep - eps;
    double dn = loss();
    x.v[i] = keep;
    CHECK(rel_err(gx.v[i], (up - dn) / (2 * eps)) < 1e-7);
  }
}

TEST_CASE("encoder produces the documented feature shape") {
  EncoderConfig cfg;  // tiny: 16 stem, stages 16/32/64, three downsamples
  Encoder<double> enc("enc", cfg);
  Rng rng(26);
  enc.init(rng);
  CHECK(enc.out_channels() == 64);
  CHECK(enc.out_h(64) == 8);
  CHECK(enc.out_w(44) == 6);

  Tensor<double> x({1, 2, 64, 44});
  fill_normal(x, rng);
  Tensor<double> y = enc.forward(x, true);
  CHECK(y.shape == std::vector<int>{64, 2, 8, 6});
  for (double v : y.v) CHECK(std::isfinite(v));
}

TEST_CASE("paper-shape encoder reaches 256x16x11") {
  EncoderConfig cfg;
  cfg.stem_channels = 64;
  cfg.stage_channels = {64, 128, 256};
  cfg.stage_strides = {1, 2, 2};
  Encoder<float> enc("enc", cfg);
  CHECK(enc.out_channels() == 256);
  CHECK(enc.out_h(64) == 16);
  CHECK(enc.out_w(44) == 11);
}

TEST_CASE("encoder is frame-permutation equivariant") {
  EncoderConfig cfg;
  Encoder<float> enc("enc", cfg);
  Rng rng(27);
  enc.init(rng);
  Tensor<float> x({1, 4, 64, 44});
  fill_normal(x, rng);
  // eval mode: per-frame operator
  enc.forward(x, true);  // prime running stats
  Tensor<float> y = enc.forward(x, false);

  // swap frames 1 and 3
  Tensor<float> xp = x;
  const size_t px = 64 * 44;
  for (size_t i = 0; i < px; ++i) std::swap(xp.v[1 * px + i], xp.v[3 * px + i]);
  Tensor<float> yp = enc.forward(xp, false);

  const size_t fpx = (size_t)8 * 6;
  for (int c = 0; c < 64; ++c)
    for (int fi = 0; fi < 4; ++fi) {
      int src = fi == 1 ? 3 : fi == 3 ? 1 : fi;
      for (size_t i = 0; i < fpx; ++i)
        CHECK(yp.v[((size_t)c * 4 + fi) * fpx + i] == y.v[((size_t)c * 4 + src) * fpx + i]);
    }
}

TEST_CASE("zero input stays finite through the encoder") {
  EncoderConfig cfg;
  Encoder<float> enc("enc", cfg);
  Rng rng(28);
  enc.init(rng);
  Tensor<float> x({1, 2, 64, 44});
  Tensor<float> y = enc.forward(x, true);
  for (float v : y.v) CHECK(std::isfinite(v));
}
