#pragma once

#include <cstdint>
#include <vector>

namespace xgait {

// Dense row-major 2D array. Frames, masks and canvases are all grids.
template <class T>
struct Grid {
  int h = 0;
  int w = 0;
  std::vector<T> v;

  Grid() = default;
  Grid(int h_, int w_, T fill = T{}) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill) {}

  T& at(int r, int c) { return v[static_cast<size_t>(r) * w + c]; }
  const T& at(int r, int c) const { return v[static_cast<size_t>(r) * w + c]; }

  bool in_bounds(int r, int c) const { return r >= 0 && r < h && c >= 0 && c < w; }
  size_t size() const { return v.size(); }
  bool same_shape(const Grid& o) const { return h == o.h && w == o.w; }

  bool operator==(const Grid& o) const { return h == o.h && w == o.w && v == o.v; }
};

using ByteGrid = Grid<uint8_t>;

}  // namespace xgait
