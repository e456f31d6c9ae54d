#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "xgait/nn/tensor.hpp"
#include "xgait/rng.hpp"

namespace xgait::testutil {

inline double rel_err(double a, double b, double floor = 1e-5) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

template <class S>
void fill_normal(nn::Tensor<S>& t, Rng& rng, double stddev = 1.0) {
  for (auto& v : t.v) v = (S)rng.normal(0.0, stddev);
}

// Central finite differences on selected scalars of a parameter tensor.
// `loss` must re-run the forward pass; `analytic` is the recorded gradient.
struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst;
};

template <class S>
void fd_check_tensor(nn::Param<S>& p, const std::function<double()>& loss, int probes, Rng& rng,
                     GradCheckReport& report, double eps = 1e-5) {
  const size_t n = p.w.numel();
  for (int k = 0; k < probes; ++k) {
    size_t i = n <= (size_t)probes ? (size_t)k % n : (size_t)rng.randint(n);
    S keep = p.w.v[i];
    p.w.v[i] = keep + (S)eps;
    double up = loss();
    p.w.v[i] = keep - (S)eps;
    double dn = loss();
    p.w.v[i] = keep;
    double fd = (up - dn) / (2.0 * eps);
    double err = rel_err((double)p.g.v[i], fd);
    if (err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst = p.name + "[" + std::to_string(i) + "] analytic=" +
                     std::to_string((double)p.g.v[i]) + " fd=" + std::to_string(fd);
    }
  }
}

}  // namespace xgait::testutil
