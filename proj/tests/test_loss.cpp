#include <doctest.h>

#include <set>

#include "testutil.hpp"
#include "xgait/nn/loss.hpp"

using namespace xgait;
using namespace xgait::nn;
using xgait::testutil::fill_normal;
using xgait::testutil::rel_err;

namespace {

// exhaustive three-loop oracle for the batch-all triplet loss
double triplet_oracle(const Tensor<double>& emb, const std::vector<int>& labels, double margin,
                      long* active_out = nullptr) {
  const int n = emb.dim(0), strips = emb.dim(1), d = emb.dim(2);
  auto dist = [&](int a, int b) {
    double mean = 0;
    for (int s = 0; s < strips; ++s) {
      double sq = 0;
      for (int j = 0; j < d; ++j) {
        double diff = emb.v[((size_t)a * strips + s) * d + j] -
                      emb.v[((size_t)b * strips + s) * d + j];
        sq += diff * diff;
      }
      mean += std::sqrt(sq);
    }
    return mean / strips;
  };
  double sum = 0;
  long active = 0;
  for (int a = 0; a < n; ++a)
    for (int p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (int g = 0; g < n; ++g) {
        if (labels[g] == labels[a]) continue;
        double v = dist(a, p) - dist(a, g) + margin;
        if (v > 0) {
          sum += v;
          ++active;
        }
      }
    }
  if (active_out) *active_out = active;
  return active ? sum / active : 0.0;
}

}  // namespace

TEST_CASE("triplet hinge arithmetic follows the definition") {
  CHECK(std::max(0.0, 0.5 - 1.0 + 0.2) == 0.0);
  CHECK(std::abs(std::max(0.0, 1.0 - 0.9 + 0.2) - 0.3) < 1e-15);
}

TEST_CASE("triplet loss matches the exhaustive oracle on random batches") {
  Rng rng(71);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 8, strips = 3, d = 4;
    Tensor<double> emb({n, strips, d});
    fill_normal(emb, rng);
    std::vector<int> labels(n);
    for (auto& l : labels) l = (int)rng.randint(3);
    if (std::set<int>(labels.begin(), labels.end()).size() < 2) labels[0] = labels[0] ? 0 : 1;

    long oracle_active = 0;
    double expect = triplet_oracle(emb, labels, 0.2, &oracle_active);
    auto got = triplet_loss(emb, labels, 0.2);
    CHECK(std::abs((double)got.loss - expect) <= 1e-9);
    CHECK(got.active == oracle_active);
  }
}

TEST_CASE("triplet loss rejects single-class batches") {
  Tensor<double> emb({4, 2, 3});
  std::vector<int> labels = {1, 1, 1, 1};
  CHECK_THROWS_AS(triplet_loss(emb, labels, 0.2), DegenerateBatch);
}

TEST_CASE("triplet loss is zero iff positives beat negatives by the margin") {
  // two tight clusters far apart: no active triplet
  Tensor<double> emb({4, 1, 2});
  emb.v = {0.0, 0.0, 0.1, 0.0, 10.0, 0.0, 10.1, 0.0};
  std::vector<int> labels = {0, 0, 1, 1};
  auto res = triplet_loss(emb, labels, 0.2);
  CHECK(res.loss == 0.0);
  CHECK(res.active == 0);
  for (double g : res.grad.v) CHECK(g == 0.0);

  // shrink the separation below the margin: loss appears
  emb.v = {0.0, 0.0, 0.5, 0.0, 0.6, 0.0, 1.1, 0.0};
  res = triplet_loss(emb, labels, 0.2);
  CHECK(res.loss > 0.0);
  CHECK(res.active > 0);
}

TEST_CASE("triplet gradients match finite differences") {
  Rng rng(72);
  const int n = 6, strips = 2, d = 3;
  Tensor<double> emb({n, strips, d});
  fill_normal(emb, rng);
  std::vector<int> labels = {0, 0, 1, 1, 2, 2};
  auto res = triplet_loss(emb, labels, 0.2);
  REQUIRE(res.active > 0);

  double eps = 1e-6;
  for (size_t i = 0; i < emb.numel(); ++i) {
    double keep = emb.v[i];
    emb.v[i] = keep + eps;
    double up = (double)triplet_loss(emb, labels, 0.2).loss;
    emb.v[i] = keep - eps;
    double dn = (double)triplet_loss(emb, labels, 0.2).loss;
    emb.v[i] = keep;
    CHECK(rel_err(res.grad.v[i], (up - dn) / (2 * eps)) < 1e-5);
  }
}

TEST_CASE("uniform logits give ln(C) cross entropy") {
  for (int classes : {2, 5, 17}) {
    Tensor<double> logits({3, 4, classes}, 0.7);  // any constant
    std::vector<int> labels = {0, 1, classes - 1};
    auto res = ce_loss(logits, labels);
    CHECK(std::abs((double)res.loss - std::log((double)classes)) < 1e-12);
  }
}

TEST_CASE("confident correct logits drive the loss to zero") {
  double prev = 1e9;
  for (double gap : {2.0, 5.0, 10.0, 20.0}) {
    Tensor<double> logits({1, 1, 4});
    logits.v = {gap, 0.0, 0.0, 0.0};
    auto res = ce_loss(logits, {0});
    CHECK((double)res.loss < prev);
    prev = res.loss;
  }
  CHECK(prev < 1e-8);
}

TEST_CASE("cross entropy matches a log-sum-exp oracle") {
  Rng rng(73);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 4, strips = 3, classes = 6;
    Tensor<double> logits({n, strips, classes});
    fill_normal(logits, rng, 3.0);
    std::vector<int> labels(n);
    for (auto& l : labels) l = (int)rng.randint(classes);

    double expect = 0;
    for (int ni = 0; ni < n; ++ni)
      for (int s = 0; s < strips; ++s) {
        const double* lp = logits.data() + ((size_t)ni * strips + s) * classes;
        double lse = 0;
        for (int j = 0; j < classes; ++j) lse += std::exp(lp[j]);
        expect += std::log(lse) - lp[labels[ni]];
      }
    expect /= n * strips;
    auto res = ce_loss(logits, labels);
    CHECK(std::abs((double)res.loss - expect) <= 1e-9);
  }
}

TEST_CASE("cross entropy gradients match finite differences") {
  Rng rng(74);
  Tensor<double> logits({2, 2, 5});
  fill_normal(logits, rng);
  std::vector<int> labels = {1, 3};
  auto res = ce_loss(logits, labels);
  double eps = 1e-6;
  for (size_t i = 0; i < logits.numel(); ++i) {
    double keep = logits.v[i];
    logits.v[i] = keep + eps;
    double up = (double)ce_loss(logits, labels).loss;
    logits.v[i] = keep - eps;
    double dn = (double)ce_loss(logits, labels).loss;
    logits.v[i] = keep;
    CHECK(rel_err(res.grad.v[i], (up - dn) / (2 * eps)) < 1e-6);
  }
}

TEST_CASE("cross entropy rejects out-of-range labels") {
  Tensor<double> logits({2, 1, 3});
  CHECK_THROWS_AS(ce_loss(logits, {0, 3}), LabelOutOfRange);
  CHECK_THROWS_AS(ce_loss(logits, {-1, 0}), LabelOutOfRange);
}

TEST_CASE("total loss weights its two terms") {
  CHECK(total_loss(0.5, 2.0, 1.0, 1.0) == 2.5);
  CHECK(total_loss(0.5, 2.0, 1.0, 0.0) == 0.5);  // pure metric learning
  CHECK(total_loss(0.0, 0.0, 1.0, 1.0) == 0.0);
  CHECK(total_loss(3.0, 7.0, 2.0, 0.5) == 9.5);
}
