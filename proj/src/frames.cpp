#include "xgait/frames.hpp"

#include <algorithm>
#include <cmath>

namespace xgait {

bool label_in_upper(uint8_t label) { return label == kHead; }

bool label_in_middle(uint8_t label) {
  return label == kTorso || label == kLeftArm || label == kRightArm || label == kLeftHand ||
         label == kRightHand || label == kDress;
}

bool label_in_lower(uint8_t label) {
  return label == kDress || label == kLeftLeg || label == kRightLeg || label == kLeftFoot ||
         label == kRightFoot;
}

AlignTransform compute_align_transform(const ByteGrid& grid) {
  int top = -1, bottom = -1;
  for (int r = 0; r < grid.h; ++r) {
    for (int c = 0; c < grid.w; ++c) {
      if (grid.at(r, c) != 0) {
        if (top < 0) top = r;
        bottom = r;
        break;
      }
    }
  }
  if (top < 0) throw EmptyForeground("align_and_resize: frame has no foreground pixel");

  AlignTransform t;
  t.crop_top = top;
  t.crop_h = bottom - top + 1;
  t.src_w = grid.w;
  t.scaled_w = std::max(1, (int)std::lround((double)grid.w * kAlignedH / t.crop_h));

  // Horizontal reference: mean foreground column over the top half of the
  // scaled body. The top half is stable against leg spread.
  double sum = 0.0;
  long count = 0;
  for (int r = 0; r < kAlignedH / 2; ++r) {
    int sr = t.crop_top + std::min(t.crop_h - 1, (int)((r + 0.5) * t.crop_h / kAlignedH));
    for (int c = 0; c < t.scaled_w; ++c) {
      int sc = std::min(grid.w - 1, (int)((c + 0.5) * grid.w / t.scaled_w));
      if (grid.at(sr, sc) != 0) {
        sum += c;
        ++count;
      }
    }
  }
  if (count == 0) {
    // degenerate top half (e.g. occluded); fall back to the whole body
    for (int r = 0; r < kAlignedH; ++r) {
      int sr = t.crop_top + std::min(t.crop_h - 1, (int)((r + 0.5) * t.crop_h / kAlignedH));
      for (int c = 0; c < t.scaled_w; ++c) {
        int sc = std::min(grid.w - 1, (int)((c + 0.5) * grid.w / t.scaled_w));
        if (grid.at(sr, sc) != 0) {
          sum += c;
          ++count;
        }
      }
    }
  }
  t.center_col = count > 0 ? (int)std::lround(sum / count) : t.scaled_w / 2;
  return t;
}

ByteGrid apply_align_transform(const ByteGrid& grid, const AlignTransform& t) {
  ByteGrid out(kAlignedH, kAlignedW, 0);
  int offset = t.center_col - kAlignedW / 2;
  for (int r = 0; r < kAlignedH; ++r) {
    int sr = t.crop_top + std::min(t.crop_h - 1, (int)((r + 0.5) * t.crop_h / kAlignedH));
    for (int c = 0; c < kAlignedW; ++c) {
      int scaled_c = c + offset;
      if (scaled_c < 0 || scaled_c >= t.scaled_w) continue;
      int sc = std::min(grid.w - 1, (int)((scaled_c + 0.5) * grid.w / t.scaled_w));
      out.at(r, c) = grid.at(sr, sc);  // nearest neighbor: no new values
    }
  }
  return out;
}

SilhouetteFrame align_and_resize(const SilhouetteFrame& frame) {
  AlignTransform t = compute_align_transform(frame.pixels);
  SilhouetteFrame out;
  out.pixels = apply_align_transform(frame.pixels, t);
  out.source_h = frame.pixels.h;
  out.source_w = frame.pixels.w;
  return out;
}

ParsingFrame align_and_resize(const ParsingFrame& frame) {
  AlignTransform t = compute_align_transform(frame.labels);
  ParsingFrame out;
  out.labels = apply_align_transform(frame.labels, t);
  out.source_h = frame.labels.h;
  out.source_w = frame.labels.w;
  return out;
}

std::pair<SilhouetteFrame, ParsingFrame> intersect(const SilhouetteFrame& sil,
                                                   const ParsingFrame& par) {
  if (!sil.pixels.same_shape(par.labels))
    throw ShapeMismatch("intersect: silhouette and parsing dimensions differ");
  SilhouetteFrame sil_star = sil;
  ParsingFrame par_star = par;
  for (size_t i = 0; i < sil.pixels.size(); ++i) {
    bool both = sil.pixels.v[i] != 0 && par.labels.v[i] != 0;
    sil_star.pixels.v[i] = both ? 1 : 0;
    par_star.labels.v[i] = both ? par.labels.v[i] : 0;
  }
  return {sil_star, par_star};
}

RegionMasks region_masks(const ParsingFrame& par) {
  RegionMasks m;
  m.upper = ByteGrid(par.labels.h, par.labels.w, 0);
  m.middle = ByteGrid(par.labels.h, par.labels.w, 0);
  m.lower = ByteGrid(par.labels.h, par.labels.w, 0);
  for (size_t i = 0; i < par.labels.size(); ++i) {
    uint8_t l = par.labels.v[i];
    if (label_in_upper(l)) m.upper.v[i] = 1;
    if (label_in_middle(l)) m.middle.v[i] = 1;
    if (label_in_lower(l)) m.lower.v[i] = 1;
  }
  return m;
}

ByteGrid downsample_mask(const ByteGrid& mask, int h, int w) {
  if (h <= 0 || w <= 0 || h > mask.h || w > mask.w)
    throw InvalidTarget("downsample_mask: target must satisfy 0 < h <= H, 0 < w <= W");
  ByteGrid out(h, w, 0);
  for (int r = 0; r < h; ++r) {
    int r0 = (int)((long)r * mask.h / h);
    int r1 = (int)((long)(r + 1) * mask.h / h);
    for (int c = 0; c < w; ++c) {
      int c0 = (int)((long)c * mask.w / w);
      int c1 = (int)((long)(c + 1) * mask.w / w);
      uint8_t any = 0;
      for (int rr = r0; rr < r1 && !any; ++rr)
        for (int cc = c0; cc < c1; ++cc)
          if (mask.at(rr, cc)) {
            any = 1;
            break;
          }
      out.at(r, c) = any;
    }
  }
  return out;
}

}  // namespace xgait
