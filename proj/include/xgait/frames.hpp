#pragma once

#include <string>
#include <utility>
#include <vector>

#include "xgait/errors.hpp"
#include "xgait/grid.hpp"

namespace xgait {

// Aligned frame geometry shared by the whole pipeline.
inline constexpr int kAlignedH = 64;
inline constexpr int kAlignedW = 44;

// Parsing label palette. Fixed: region definitions and the one-hot encoder
// input depend on these exact values.
enum ParsingLabel : uint8_t {
  kBackground = 0,
  kHead = 1,
  kTorso = 2,
  kLeftArm = 3,
  kRightArm = 4,
  kLeftHand = 5,
  kRightHand = 6,
  kDress = 7,
  kLeftLeg = 8,
  kRightLeg = 9,
  kLeftFoot = 10,
  kRightFoot = 11,
};
inline constexpr int kNumParsingLabels = 12;

// pixels in {0,1}
struct SilhouetteFrame {
  ByteGrid pixels;
  int source_h = 0;
  int source_w = 0;
};

// labels in {0..11}
struct ParsingFrame {
  ByteGrid labels;
  int source_h = 0;
  int source_w = 0;
};

struct SequenceMeta {
  std::string subject_id;
  std::string seq_id;
  int view = 0;
  std::string condition;
};

struct SilhouetteSequence {
  SequenceMeta meta;
  std::vector<SilhouetteFrame> frames;
};

struct ParsingSequence {
  SequenceMeta meta;
  std::vector<ParsingFrame> frames;
};

// upper = head; middle = torso/arms/hands/dress; lower = legs/feet/dress.
// Dress sits in both middle and lower, so the masks are not a partition.
struct RegionMasks {
  ByteGrid upper;
  ByteGrid middle;
  ByteGrid lower;
};

inline constexpr int kNumRegions = 3;

bool label_in_upper(uint8_t label);
bool label_in_middle(uint8_t label);
bool label_in_lower(uint8_t label);

// Crop-scale-center transform computed from a silhouette foreground and
// reusable on a co-registered parsing frame (the generator aligns both
// modalities of a frame with the silhouette's transform).
struct AlignTransform {
  int crop_top = 0;    // first foreground row in the source
  int crop_h = 0;      // foreground row extent
  int src_w = 0;
  int scaled_w = 0;    // width after isotropic scale to height 64
  int center_col = 0;  // top-half foreground centroid column, scaled coords
};

AlignTransform compute_align_transform(const ByteGrid& grid);
ByteGrid apply_align_transform(const ByteGrid& grid, const AlignTransform& t);

SilhouetteFrame align_and_resize(const SilhouetteFrame& frame);
ParsingFrame align_and_resize(const ParsingFrame& frame);

// §-style intersection: restrict both modalities to their common support.
std::pair<SilhouetteFrame, ParsingFrame> intersect(const SilhouetteFrame& sil,
                                                   const ParsingFrame& par);

RegionMasks region_masks(const ParsingFrame& par);

// Max-pool a binary mask onto an (h, w) grid; output cell is 1 iff any
// covered source pixel is 1.
ByteGrid downsample_mask(const ByteGrid& mask, int h, int w);

}  // namespace xgait
