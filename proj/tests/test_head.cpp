#include <doctest.h>

#include <set>

#include "testutil.hpp"
#include "xgait/nn/head.hpp"

using namespace xgait;
using namespace xgait::nn;
using xgait::testutil::fill_normal;
using xgait::testutil::rel_err;

TEST_CASE("set_pool is the identity for single-frame sequences") {
  Rng rng(61);
  SetPool<float> sp;
  Tensor<float> x({3, 2, 4, 5});
  fill_normal(x, rng);
  Tensor<float> y = sp.forward(x, 2, 1);
  CHECK(y.shape == std::vector<int>{3, 2, 4, 5});
  CHECK(y.v == x.v);
}

TEST_CASE("set_pool ignores duplicated frames") {
  Rng rng(62);
  SetPool<float> sp;
  Tensor<float> x({2, 3, 4, 4});
  fill_normal(x, rng);
  Tensor<float> base = sp.forward(x, 1, 3);

  // duplicate the middle frame
  Tensor<float> dup({2, 4, 4, 4});
  const size_t hw = 16;
  for (int c = 0; c < 2; ++c) {
    for (int t = 0; t < 3; ++t)
      std::copy_n(x.data() + ((size_t)c * 3 + t) * hw, hw, dup.data() + ((size_t)c * 4 + t) * hw);
    std::copy_n(x.data() + ((size_t)c * 3 + 1) * hw, hw, dup.data() + ((size_t)c * 4 + 3) * hw);
  }
  Tensor<float> pooled = sp.forward(dup, 1, 4);
  CHECK(pooled.v == base.v);
}

TEST_CASE("set_pool is exactly frame-permutation invariant") {
  Rng rng(63);
  SetPool<float> sp;
  Tensor<float> x({4, 6, 3, 3});
  fill_normal(x, rng);
  Tensor<float> base = sp.forward(x, 2, 3);

  // rotate the frames of each of the two sequences
  Tensor<float> perm = x;
  const size_t hw = 9;
  for (int c = 0; c < 4; ++c)
    for (int n = 0; n < 2; ++n)
      for (int t = 0; t < 3; ++t)
        std::copy_n(x.data() + ((size_t)c * 6 + n * 3 + t) * hw, hw,
                    perm.data() + ((size_t)c * 6 + n * 3 + (t + 1) % 3) * hw);
  Tensor<float> pooled = sp.forward(perm, 2, 3);
  CHECK(pooled.v == base.v);
}

TEST_CASE("hpm with one scale and an identity map is max+mean pooling") {
  const int c = 5;
  HpmConfig cfg;
  cfg.scales = {1};
  cfg.out_dim = c;
  Hpm<double> hpm("hpm", c, 4, cfg);
  ParamRefs<double> refs;
  hpm.collect(refs);
  refs.params[0]->w.zero();
  for (int i = 0; i < c; ++i) refs.params[0]->w.v[(size_t)i * c + i] = 1.0;

  Rng rng(64);
  Tensor<double> x({c, 2, 4, 3});
  fill_normal(x, rng);
  Tensor<double> y = hpm.forward(x);
  REQUIRE(y.shape == std::vector<int>{2, 1, c});
  for (int n = 0; n < 2; ++n)
    for (int ci = 0; ci < c; ++ci) {
      const double* p = x.data() + ((size_t)ci * 2 + n) * 12;
      double mx = p[0], mean = 0;
      for (int i = 0; i < 12; ++i) {
        mx = std::max(mx, p[i]);
        mean += p[i];
      }
      mean /= 12;
      CHECK(rel_err(y.v[(size_t)n * c + ci], mx + mean) < 1e-12);
    }
}

TEST_CASE("hpm default pyramid has 31 strips on h=16") {
  HpmConfig cfg;
  cfg.scales = {1, 2, 4, 8, 16};
  CHECK(cfg.n_strips() == 31);
  Hpm<float> hpm("hpm", 8, 16, cfg);
  CHECK(hpm.n_strips() == 31);
}

TEST_CASE("hpm rejects scales that do not divide the height") {
  HpmConfig cfg;
  cfg.scales = {1, 3};
  CHECK_THROWS_AS(Hpm<float>("hpm", 8, 8, cfg), ScaleError);
}

TEST_CASE("hpm pools a constant map to twice the constant") {
  const int c = 3;
  HpmConfig cfg;
  cfg.scales = {1, 2};
  cfg.out_dim = c;
  Hpm<float> hpm("hpm", c, 4, cfg);
  ParamRefs<float> refs;
  hpm.collect(refs);
  for (auto* p : refs.params) {
    p->w.zero();
    for (int i = 0; i < c; ++i) p->w.v[(size_t)i * c + i] = 1.0f;
  }
  Tensor<float> x({c, 1, 4, 5}, 0.75f);
  Tensor<float> y = hpm.forward(x);
  for (float v : y.v) CHECK(v == 1.5f);  // max = mean = k
}

TEST_CASE("every hpm strip owns a distinct linear map") {
  HpmConfig cfg;
  cfg.scales = {1, 2, 4};
  Hpm<float> hpm("hpm", 6, 8, cfg);
  ParamRefs<float> refs;
  hpm.collect(refs);
  CHECK((int)refs.params.size() == cfg.n_strips());  // bias-free per-strip maps
  std::set<std::string> names;
  std::set<const void*> addrs;
  for (auto* p : refs.params) {
    names.insert(p->name);
    addrs.insert(p->w.data());
  }
  CHECK(names.size() == refs.params.size());
  CHECK(addrs.size() == refs.params.size());
}

TEST_CASE("fmh is invariant to frame shuffles and differentiable") {
  Rng rng(65);
  const int c = 4, n = 2, t = 5, h = 8, w = 3;
  HpmConfig cfg;
  cfg.scales = {1, 2, 4};
  cfg.out_dim = 6;
  Fmh<double> fmh("fmh", c, h, cfg);
  fmh.init(rng);

  Tensor<double> x({c, n * t, h, w});
  fill_normal(x, rng);
  Tensor<double> base = fmh.forward(x, n, t);
  REQUIRE(base.shape == std::vector<int>{n, 7, 6});

  // shuffle frames within each sequence
  std::vector<int> order = {3, 0, 4, 1, 2};
  Tensor<double> perm(x.shape);
  const size_t hw = (size_t)h * w;
  for (int ci = 0; ci < c; ++ci)
    for (int ni = 0; ni < n; ++ni)
      for (int ti = 0; ti < t; ++ti)
        std::copy_n(x.data() + ((size_t)ci * n * t + ni * t + order[ti]) * hw, hw,
                    perm.data() + ((size_t)ci * n * t + ni * t + ti) * hw);
  Tensor<double> shuffled = fmh.forward(perm, n, t);
  CHECK(shuffled.v == base.v);

  // finite differences through set pooling and the strip maps
  Tensor<double> r(base.shape);
  fill_normal(r, rng);
  auto loss = [&]() {
    Tensor<double> e = fmh.forward(x, n, t);
    double acc = 0;
    for (size_t i = 0; i < e.numel(); ++i) acc += e.v[i] * r.v[i];
    return acc;
  };
  loss();
  Tensor<double> gx = fmh.backward(r);

  ParamRefs<double> refs;
  fmh.collect(refs);
  testutil::GradCheckReport rep;
  for (auto* p : refs.params) testutil::fd_check_tensor(*p, loss, 4, rng, rep);
  CHECK_MESSAGE(rep.max_rel_err < 1e-4, rep.worst);

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
}

TEST_CASE("two heads with different parameters disagree on the same input") {
  Rng rng(66);
  const int c = 4, h = 8;
  HpmConfig cfg;
  cfg.scales = {1, 2};
  cfg.out_dim = 5;
  Fmh<float> a("fmh_a", c, h, cfg), b("fmh_b", c, h, cfg);
  a.init(rng);
  b.init(rng);
  Tensor<float> x({c, 3, h, 4});
  fill_normal(x, rng);
  CHECK(a.forward(x, 1, 3).v != b.forward(x, 1, 3).v);
}

TEST_CASE("assemble_output stacks heads in a fixed order") {
  const int n = 2, strips = 31, d = 256;
  Tensor<float> s({n, strips, d}, 1.0f), p({n, strips, d}, 2.0f), ga({n, strips, d}, 3.0f),
      pa({n, strips, d}, 4.0f);
  Tensor<float> out = assemble_output<float>({&s, &p, &ga, &pa});
  REQUIRE(out.shape == std::vector<int>{n, 124, d});  // 4 * 31 strips
  for (int ni = 0; ni < n; ++ni)
    for (int r = 0; r < 124; ++r) {
      float expect = (float)(r / strips + 1);
      CHECK(out.v[((size_t)ni * 124 + r) * d] == expect);
    }

  Tensor<float> z({n, strips, d});
  Tensor<float> zout = assemble_output<float>({&z, &z, &z, &z});
  for (float v : zout.v) CHECK(v == 0.0f);

  Tensor<float> bad({n, strips, d - 1});
  CHECK_THROWS_AS(assemble_output<float>({&s, &bad}), ShapeMismatch);
}
