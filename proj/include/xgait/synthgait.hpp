#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xgait/frames.hpp"
#include "xgait/rng.hpp"

namespace xgait {

enum class ClothingProfile { kTight, kDress, kCoat };

const char* to_string(ClothingProfile p);
ClothingProfile clothing_profile_from_string(const std::string& s);

// Built-in outfit swap used by cloth-change sequences: tight -> coat
// (upper change), coat -> dress, dress -> tight.
ClothingProfile swapped_profile(ClothingProfile p);

// Parameters of one synthetic subject. Geometric fields are fractions of
// the render canvas height.
struct WalkerIdentity {
  double torso_width = 0.13;
  double torso_height = 0.31;
  double head_radius = 0.065;
  double upper_arm = 0.14;
  double lower_arm = 0.13;
  double thigh = 0.19;
  double shin = 0.18;
  double foot = 0.055;
  double stride_amplitude = 0.45;   // radians, hip swing
  double gait_frequency = 0.08;     // cycles per frame
  double phase_offset = 0.0;        // radians
  double body_lean = 0.04;          // radians
  ClothingProfile clothing_profile = ClothingProfile::kTight;
};

struct OcclusionBand {
  int row_begin = 0;  // rows of the aligned 64x44 frame, hard erase
  int row_end = 0;    // exclusive; band must cover < 50% of rows
};

struct RenderSpec {
  int n_frames = 30;       // >= 8
  int view = 0;            // yaw bucket 0..3, horizontal squash
  std::optional<OcclusionBand> occlusion;
  double noise = 0.0;      // parsing-only boundary degradation in [0,1]
  uint64_t rng_seed = 0;   // drives the parsing noise
};

inline constexpr int kNumViewBuckets = 4;

WalkerIdentity sample_identity(uint64_t seed);

// Poses a 2D stick-and-capsule walker with sinusoidal joint angles (hips
// antiphase, arms counter-phase to legs), rasterizes each part with its
// label, degrades the parsing per spec.noise, aligns both modalities with
// the silhouette's transform and finally applies the occlusion band.
std::pair<SilhouetteSequence, ParsingSequence> render_sequence(const WalkerIdentity& id,
                                                               const RenderSpec& spec);

struct SequenceRecord {
  std::string seq_id;
  int view = 0;
  std::string condition;
  uint64_t seed = 0;
  int frames = 0;
};

struct SubjectRecord {
  std::string subject_id;
  uint64_t identity_seed = 0;
  std::vector<SequenceRecord> sequences;
};

struct GenerateConfig {
  int n_subjects = 20;
  int seqs_per_subject = 4;
  int frames = 40;
  double noise = 0.0;
  uint64_t master_seed = 0;
  bool cloth_change = true;  // every third sequence swaps the outfit
};

struct DatasetManifest {
  GenerateConfig config;
  std::vector<SubjectRecord> subjects;
};

// Writes <root>/<subject>/<seq>/{sil,par}/<frame_%04d>.png plus
// manifest.json and a default split.txt (all subjects train+test, first
// sequence of each subject as query). Byte-deterministic in master_seed.
DatasetManifest generate_dataset(const GenerateConfig& cfg, const std::string& out_root);

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& m, const std::string& path);

}  // namespace xgait
