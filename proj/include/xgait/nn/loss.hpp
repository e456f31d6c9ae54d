#pragma once

#include <cmath>
#include <vector>

#include "xgait/nn/tensor.hpp"

namespace xgait::nn {

template <class S>
struct TripletResult {
  S loss = S(0);
  long active = 0;  // triplets with nonzero hinge
  long total = 0;
  Tensor<S> grad;   // d loss / d embeddings
};

// Batch-all triplet loss over [N, strips, d] embeddings. The distance is
// the per-strip Euclidean distance averaged over strips; the mean is taken
// over triplets with a nonzero hinge.
template <class S>
TripletResult<S> triplet_loss(const Tensor<S>& emb, const std::vector<int>& labels, S margin) {
  const int n = emb.dim(0), strips = emb.dim(1), d = emb.dim(2);
  if ((int)labels.size() != n) throw ShapeError("triplet_loss: one label per embedding required");
  bool multi_class = false;
  for (int i = 1; i < n && !multi_class; ++i) multi_class = labels[i] != labels[0];
  if (!multi_class) throw DegenerateBatch("triplet_loss: batch contains a single class");

  // per-strip pairwise distances
  std::vector<S> dist((size_t)n * n * strips, S(0));
  std::vector<S> mean_dist((size_t)n * n, S(0));
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      S acc = 0;
      for (int s = 0; s < strips; ++s) {
        const S* ea = emb.data() + ((size_t)a * strips + s) * d;
        const S* eb = emb.data() + ((size_t)b * strips + s) * d;
        S sq = 0;
        for (int j = 0; j < d; ++j) {
          S diff = ea[j] - eb[j];
          sq += diff * diff;
        }
        S ds = std::sqrt(sq);
        dist[((size_t)a * n + b) * strips + s] = ds;
        dist[((size_t)b * n + a) * strips + s] = ds;
        acc += ds;
      }
      mean_dist[(size_t)a * n + b] = mean_dist[(size_t)b * n + a] = acc / (S)strips;
    }

  // hinge over all (anchor, positive, negative) triplets
  TripletResult<S> res;
  res.grad = Tensor<S>(emb.shape);
  S sum = 0;
  std::vector<S> pair_coeff((size_t)n * n, S(0));  // d loss-sum / d mean_dist(a,b)
  for (int a = 0; a < n; ++a)
    for (int p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (int g = 0; g < n; ++g) {
        if (labels[g] == labels[a]) continue;
        ++res.total;
        S v = mean_dist[(size_t)a * n + p] - mean_dist[(size_t)a * n + g] + margin;
        if (v > S(0)) {
          sum += v;
          ++res.active;
          pair_coeff[(size_t)a * n + p] += S(1);
          pair_coeff[(size_t)a * n + g] -= S(1);
        }
      }
    }
  if (res.active == 0) return res;
  res.loss = sum / (S)res.active;

  // chain through mean-of-strip Euclidean distances
  const S inv_active = S(1) / (S)res.active;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      S coeff = pair_coeff[(size_t)a * n + b];
      if (coeff == S(0)) continue;
      coeff *= inv_active / (S)strips;
      for (int s = 0; s < strips; ++s) {
        S ds = dist[((size_t)a * n + b) * strips + s];
        if (ds <= S(0)) continue;
        const S* ea = emb.data() + ((size_t)a * strips + s) * d;
        const S* eb = emb.data() + ((size_t)b * strips + s) * d;
        S* ga = res.grad.data() + ((size_t)a * strips + s) * d;
        S* gb = res.grad.data() + ((size_t)b * strips + s) * d;
        S scale = coeff / ds;
        for (int j = 0; j < d; ++j) {
          S diff = (ea[j] - eb[j]) * scale;
          ga[j] += diff;
          gb[j] -= diff;
        }
      }
    }
  return res;
}

template <class S>
struct CeResult {
  S loss = S(0);
  Tensor<S> grad;  // d loss / d logits
};

// Softmax cross-entropy over per-strip logits [N, strips, C], averaged
// over batch and strips.
template <class S>
CeResult<S> ce_loss(const Tensor<S>& logits, const std::vector<int>& labels) {
  const int n = logits.dim(0), strips = logits.dim(1), c = logits.dim(2);
  if ((int)labels.size() != n) throw ShapeError("ce_loss: one label per row required");
  for (int lab : labels)
    if (lab < 0 || lab >= c) throw LabelOutOfRange("ce_loss: label outside [0, n_classes)");

  CeResult<S> res;
  res.grad = Tensor<S>(logits.shape);
  const S inv = S(1) / (S)(n * strips);
  S total = 0;
  std::vector<S> prob(c);
  for (int ni = 0; ni < n; ++ni)
    for (int s = 0; s < strips; ++s) {
      const S* lp = logits.data() + ((size_t)ni * strips + s) * c;
      S* gp = res.grad.data() + ((size_t)ni * strips + s) * c;
      S mx = lp[0];
      for (int j = 1; j < c; ++j) mx = std::max(mx, lp[j]);
      S denom = 0;
      for (int j = 0; j < c; ++j) denom += std::exp(lp[j] - mx);
      S log_denom = std::log(denom);
      total += log_denom - (lp[labels[ni]] - mx);
      for (int j = 0; j < c; ++j) {
        prob[j] = std::exp(lp[j] - mx) / denom;
        gp[j] = (prob[j] - (j == labels[ni] ? S(1) : S(0))) * inv;
      }
    }
  res.loss = total * inv;
  return res;
}

template <class S>
S total_loss(S l_tri, S l_ce, S alpha, S beta) {
  return alpha * l_tri + beta * l_ce;
}

}  // namespace xgait::nn
