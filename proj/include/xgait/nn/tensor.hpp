#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "xgait/errors.hpp"

namespace xgait::nn {

// Dense row-major tensor. Feature maps use the [C, F, H, W] layout
// (channel-major over the whole frame batch) so a convolution is a single
// GEMM without output permutes.
template <class S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> sh, S fill = S(0)) : shape(std::move(sh)) {
    v.assign(count(shape), fill);
  }

  static size_t count(const std::vector<int>& sh) {
    size_t n = 1;
    for (int d : sh) n *= (size_t)d;
    return n;
  }

  size_t numel() const { return v.size(); }
  int dim(int i) const { return shape[(size_t)i]; }
  S* data() { return v.data(); }
  const S* data() const { return v.data(); }

  void zero() { std::fill(v.begin(), v.end(), S(0)); }

  void require_shape(const std::vector<int>& sh, const char* what) const {
    if (shape != sh) throw ShapeError(std::string("unexpected tensor shape in ") + what);
  }
};

// Named parameter with its gradient accumulator.
template <class S>
struct Param {
  std::string name;
  Tensor<S> w;
  Tensor<S> g;

  void init_shape(std::string n, std::vector<int> sh) {
    name = std::move(n);
    w = Tensor<S>(sh);
    g = Tensor<S>(std::move(sh));
  }
};

// Non-trainable named state (batch-norm running statistics).
template <class S>
struct Buffer {
  std::string name;
  Tensor<S> w;
};

template <class S>
struct ParamRefs {
  std::vector<Param<S>*> params;
  std::vector<Buffer<S>*> buffers;

  void add(Param<S>& p) { params.push_back(&p); }
  void add(Buffer<S>& b) { buffers.push_back(&b); }
  void merge(const ParamRefs& o) {
    params.insert(params.end(), o.params.begin(), o.params.end());
    buffers.insert(buffers.end(), o.buffers.begin(), o.buffers.end());
  }
};

}  // namespace xgait::nn
