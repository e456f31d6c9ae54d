#include "xgait/synthgait.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "xgait/errors.hpp"
#include "xgait/png_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace xgait {

const char* to_string(ClothingProfile p) {
  switch (p) {
    case ClothingProfile::kTight: return "tight";
    case ClothingProfile::kDress: return "dress";
    case ClothingProfile::kCoat: return "coat";
  }
  return "tight";
}

ClothingProfile clothing_profile_from_string(const std::string& s) {
  if (s == "tight") return ClothingProfile::kTight;
  if (s == "dress") return ClothingProfile::kDress;
  if (s == "coat") return ClothingProfile::kCoat;
  throw DataError("unknown clothing profile: " + s);
}

ClothingProfile swapped_profile(ClothingProfile p) {
  switch (p) {
    case ClothingProfile::kTight: return ClothingProfile::kCoat;   // upper change
    case ClothingProfile::kCoat: return ClothingProfile::kDress;   // full change
    case ClothingProfile::kDress: return ClothingProfile::kTight;  // lower change
  }
  return ClothingProfile::kTight;
}

WalkerIdentity sample_identity(uint64_t seed) {
  Rng rng(seed);
  WalkerIdentity id;
  id.torso_width = rng.uniform(0.10, 0.17);
  id.torso_height = rng.uniform(0.26, 0.32);
  id.head_radius = rng.uniform(0.050, 0.075);
  id.upper_arm = rng.uniform(0.12, 0.16);
  id.lower_arm = rng.uniform(0.11, 0.145);
  id.thigh = rng.uniform(0.15, 0.20);
  id.shin = rng.uniform(0.14, 0.19);
  id.foot = rng.uniform(0.045, 0.07);
  id.stride_amplitude = rng.uniform(0.32, 0.58);
  id.gait_frequency = rng.uniform(0.04, 0.14);
  id.phase_offset = rng.uniform(0.0, 2.0 * M_PI);
  id.body_lean = rng.uniform(-0.05, 0.10);
  id.clothing_profile = static_cast<ClothingProfile>(rng.randint(3));
  return id;
}

namespace {

// Render canvas; alignment rescales to 64x44 afterwards.
constexpr int kCanvasH = 128;
constexpr int kCanvasW = 88;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }

struct Capsule {
  Vec2 a;
  Vec2 b;
  double ra = 0.0;  // radius at a
  double rb = 0.0;  // radius at b
  uint8_t label = 0;
};

void check_capsule(const Capsule& c) {
  bool finite = std::isfinite(c.a.x) && std::isfinite(c.a.y) && std::isfinite(c.b.x) &&
                std::isfinite(c.b.y) && std::isfinite(c.ra) && std::isfinite(c.rb);
  if (!finite || std::max(c.ra, c.rb) < 0.75)
    throw DegenerateGeometry("capsule collapses to zero raster area");
}

void rasterize(ByteGrid& labels, const Capsule& c, double squash) {
  check_capsule(c);
  const double cx = kCanvasW / 2.0;
  double rmax = std::max(c.ra, c.rb);
  // bbox in canvas coordinates (x gets squashed toward the center)
  auto to_canvas_x = [&](double bx) { return cx + (bx - cx) * squash; };
  int x0 = (int)std::floor(to_canvas_x(std::min(c.a.x, c.b.x) - rmax));
  int x1 = (int)std::ceil(to_canvas_x(std::max(c.a.x, c.b.x) + rmax));
  int y0 = (int)std::floor(std::min(c.a.y, c.b.y) - rmax);
  int y1 = (int)std::ceil(std::max(c.a.y, c.b.y) + rmax);
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, kCanvasW - 1);
  y1 = std::min(y1, kCanvasH - 1);

  double dx = c.b.x - c.a.x, dy = c.b.y - c.a.y;
  double len2 = dx * dx + dy * dy;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      // pixel center mapped into body space (undo the view squash)
      double bx = cx + (x + 0.5 - cx) / squash;
      double by = y + 0.5;
      double t = 0.0;
      if (len2 > 0.0) t = std::clamp(((bx - c.a.x) * dx + (by - c.a.y) * dy) / len2, 0.0, 1.0);
      double px = c.a.x + t * dx, py = c.a.y + t * dy;
      double r = c.ra + t * (c.rb - c.ra);
      double ddx = bx - px, ddy = by - py;
      if (ddx * ddx + ddy * ddy <= r * r) labels.at(y, x) = c.label;
    }
  }
}

// One frame of the articulated walker, as labeled parts on the canvas.
ByteGrid pose_and_rasterize(const WalkerIdentity& id, int frame, int view) {
  const double H = kCanvasH;
  // cycle position kept in [0,1) so equal phases yield identical geometry
  double u = id.gait_frequency * frame + id.phase_offset / (2.0 * M_PI);
  u -= std::floor(u);
  double phi = 2.0 * M_PI * u;

  const double A = id.stride_amplitude;
  const double squash = std::max(0.2, 1.0 - 0.15 * (view % kNumViewBuckets));
  const bool coat = id.clothing_profile == ClothingProfile::kCoat;
  const bool dress = id.clothing_profile == ClothingProfile::kDress;

  const double ground = H - 6.0;
  double bob = 0.008 * H * std::sin(2.0 * phi);
  Vec2 pelvis{kCanvasW / 2.0, ground - 0.97 * (id.thigh + id.shin) * H + bob};
  Vec2 up{std::sin(id.body_lean), -std::cos(id.body_lean)};
  Vec2 neck = pelvis + (id.torso_height * H) * up;
  Vec2 head_c = neck + (0.015 * H + id.head_radius * H) * up;

  const double r_torso = 0.5 * id.torso_width * H * (coat ? 1.4 : 1.0);
  const double r_thigh = 0.030 * H;
  const double r_shin = 0.024 * H;
  const double r_foot = 0.017 * H;
  const double r_arm = 0.022 * H * (coat ? 1.55 : 1.0);
  const double r_hand = 0.019 * H;

  auto leg = [&](double phase, uint8_t leg_label, uint8_t foot_label, double hip_dx,
                 std::vector<Capsule>& out) {
    double alpha = A * std::sin(phase);
    double bend = A * (0.30 * (1.0 - std::cos(phase - 0.8)) + 0.06);
    Vec2 hip = pelvis + Vec2{hip_dx, 0.0};
    Vec2 knee = hip + (id.thigh * H) * Vec2{std::sin(alpha), std::cos(alpha)};
    Vec2 ankle = knee + (id.shin * H) * Vec2{std::sin(alpha - bend), std::cos(alpha - bend)};
    Vec2 toe = ankle + Vec2{id.foot * H, -0.25 * id.foot * H * std::sin(phase)};
    out.push_back({hip, knee, r_thigh, r_thigh * 0.85, leg_label});
    out.push_back({knee, ankle, r_shin, r_shin * 0.85, leg_label});
    out.push_back({ankle, toe, r_foot, r_foot, foot_label});
  };

  auto arm = [&](double phase, uint8_t arm_label, uint8_t hand_label, double sh_dx,
                 std::vector<Capsule>& out) {
    double theta = 0.6 * A * std::sin(phase + M_PI);
    Vec2 shoulder = neck + Vec2{sh_dx, 0.02 * H};
    Vec2 elbow = shoulder + (id.upper_arm * H) * Vec2{std::sin(theta), std::cos(theta)};
    Vec2 wrist = elbow + (id.lower_arm * H) * Vec2{std::sin(theta + 0.5), std::cos(theta + 0.5)};
    out.push_back({shoulder, elbow, r_arm, r_arm * 0.9, arm_label});
    out.push_back({elbow, wrist, r_arm * 0.9, r_arm * 0.75, arm_label});
    out.push_back({wrist, wrist, r_hand, r_hand, hand_label});
  };

  // later parts overwrite earlier ones: legs, feet, torso/dress, arms, hands, head
  std::vector<Capsule> parts;
  leg(phi, kLeftLeg, kLeftFoot, -0.2 * id.torso_width * H, parts);
  leg(phi + M_PI, kRightLeg, kRightFoot, 0.2 * id.torso_width * H, parts);
  Vec2 torso_lo = coat ? pelvis + (-0.05 * H) * up : pelvis;
  parts.push_back({torso_lo, neck, r_torso, r_torso * 0.92, kTorso});
  if (dress) {
    Vec2 top = pelvis + (0.06 * H) * up;
    Vec2 bottom = pelvis + Vec2{0.0, 0.95 * id.thigh * H};
    parts.push_back({top, bottom, r_torso * 1.15, r_torso * 1.8, kDress});
  }
  arm(phi, kLeftArm, kLeftHand, -0.25 * id.torso_width * H, parts);
  arm(phi + M_PI, kRightArm, kRightHand, 0.25 * id.torso_width * H, parts);
  parts.push_back({head_c, head_c, id.head_radius * H, id.head_radius * H, kHead});

  ByteGrid labels(kCanvasH, kCanvasW, 0);
  for (const auto& p : parts) rasterize(labels, p, squash);
  return labels;
}

// Boundary degradation of the parsing canvas. Each pass reads the previous
// grid and consumes one uniform per pixel so the stream stays aligned.
ByteGrid degrade_parsing(const ByteGrid& in, double noise, Rng& rng) {
  if (noise <= 0.0) return in;
  auto neighbor = [&](const ByteGrid& g, int r, int c, int k) -> int {
    static const int dr[4] = {-1, 1, 0, 0};
    static const int dc[4] = {0, 0, -1, 1};
    int rr = r + dr[k], cc = c + dc[k];
    return g.in_bounds(rr, cc) ? g.at(rr, cc) : 0;
  };

  ByteGrid a = in;
  // erosion: foreground boundary pixels drop to background
  for (int r = 0; r < in.h; ++r)
    for (int c = 0; c < in.w; ++c) {
      double p = rng.uniform01();
      if (in.at(r, c) == 0) continue;
      bool boundary = false;
      for (int k = 0; k < 4 && !boundary; ++k) boundary = neighbor(in, r, c, k) == 0;
      if (boundary && p < 0.5 * noise) a.at(r, c) = 0;
    }
  // label flips along part boundaries
  ByteGrid b = a;
  for (int r = 0; r < a.h; ++r)
    for (int c = 0; c < a.w; ++c) {
      double p = rng.uniform01();
      if (a.at(r, c) == 0) continue;
      for (int k = 0; k < 4; ++k) {
        int n = neighbor(a, r, c, k);
        if (n != 0 && n != a.at(r, c)) {
          if (p < 0.35 * noise) b.at(r, c) = (uint8_t)n;
          break;
        }
      }
    }
  // dilation: background pixels adjacent to the body pick up a label
  ByteGrid out = b;
  for (int r = 0; r < b.h; ++r)
    for (int c = 0; c < b.w; ++c) {
      double p = rng.uniform01();
      if (b.at(r, c) != 0) continue;
      for (int k = 0; k < 4; ++k) {
        int n = neighbor(b, r, c, k);
        if (n != 0) {
          if (p < 0.2 * noise) out.at(r, c) = (uint8_t)n;
          break;
        }
      }
    }
  return out;
}

void apply_occlusion(ByteGrid& g, const OcclusionBand& band) {
  for (int r = std::max(0, band.row_begin); r < std::min(g.h, band.row_end); ++r)
    for (int c = 0; c < g.w; ++c) g.at(r, c) = 0;
}

}  // namespace

std::pair<SilhouetteSequence, ParsingSequence> render_sequence(const WalkerIdentity& id,
                                                               const RenderSpec& spec) {
  if (spec.n_frames < 8) throw DataError("render_sequence: need at least 8 frames");
  if (spec.occlusion) {
    const auto& b = *spec.occlusion;
    if (b.row_end <= b.row_begin || (b.row_end - b.row_begin) * 2 >= kAlignedH)
      throw DataError("occlusion band must cover less than half of the rows");
  }

  SilhouetteSequence sils;
  ParsingSequence pars;
  sils.frames.reserve(spec.n_frames);
  pars.frames.reserve(spec.n_frames);

  for (int t = 0; t < spec.n_frames; ++t) {
    ByteGrid labels = pose_and_rasterize(id, t, spec.view);
    ByteGrid sil(labels.h, labels.w, 0);
    for (size_t i = 0; i < labels.size(); ++i) sil.v[i] = labels.v[i] ? 1 : 0;

    Rng noise_rng(derive_seed(spec.rng_seed, (uint64_t)t));
    ByteGrid noisy = degrade_parsing(labels, spec.noise, noise_rng);

    // one transform for both modalities keeps them co-registered
    AlignTransform tr = compute_align_transform(sil);
    SilhouetteFrame sf;
    sf.pixels = apply_align_transform(sil, tr);
    sf.source_h = kCanvasH;
    sf.source_w = kCanvasW;
    ParsingFrame pf;
    pf.labels = apply_align_transform(noisy, tr);
    pf.source_h = kCanvasH;
    pf.source_w = kCanvasW;

    if (spec.occlusion) {
      apply_occlusion(sf.pixels, *spec.occlusion);
      apply_occlusion(pf.labels, *spec.occlusion);
    }
    sils.frames.push_back(std::move(sf));
    pars.frames.push_back(std::move(pf));
  }
  return {std::move(sils), std::move(pars)};
}

namespace {

json manifest_to_json(const DatasetManifest& m) {
  json j;
  j["master_seed"] = m.config.master_seed;
  j["n_subjects"] = m.config.n_subjects;
  j["seqs_per_subject"] = m.config.seqs_per_subject;
  j["frames"] = m.config.frames;
  j["noise"] = m.config.noise;
  j["cloth_change"] = m.config.cloth_change;
  json subs = json::array();
  for (const auto& s : m.subjects) {
    json js;
    js["id"] = s.subject_id;
    js["identity_seed"] = s.identity_seed;
    json seqs = json::array();
    for (const auto& q : s.sequences) {
      seqs.push_back({{"id", q.seq_id},
                      {"view", q.view},
                      {"condition", q.condition},
                      {"seed", q.seed},
                      {"frames", q.frames}});
    }
    js["sequences"] = seqs;
    subs.push_back(js);
  }
  j["subjects"] = subs;
  return j;
}

}  // namespace

void save_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IOFailure("cannot write manifest: " + path);
  os << manifest_to_json(m).dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LayoutError("manifest not found: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + path + ": " + e.what());
  }
  DatasetManifest m;
  m.config.master_seed = j.at("master_seed").get<uint64_t>();
  m.config.n_subjects = j.at("n_subjects").get<int>();
  m.config.seqs_per_subject = j.at("seqs_per_subject").get<int>();
  m.config.frames = j.at("frames").get<int>();
  m.config.noise = j.at("noise").get<double>();
  m.config.cloth_change = j.value("cloth_change", true);
  for (const auto& js : j.at("subjects")) {
    SubjectRecord s;
    s.subject_id = js.at("id").get<std::string>();
    s.identity_seed = js.at("identity_seed").get<uint64_t>();
    for (const auto& q : js.at("sequences")) {
      SequenceRecord r;
      r.seq_id = q.at("id").get<std::string>();
      r.view = q.at("view").get<int>();
      r.condition = q.at("condition").get<std::string>();
      r.seed = q.at("seed").get<uint64_t>();
      r.frames = q.at("frames").get<int>();
      s.sequences.push_back(r);
    }
    m.subjects.push_back(s);
  }
  return m;
}

DatasetManifest generate_dataset(const GenerateConfig& cfg, const std::string& out_root) {
  if (cfg.n_subjects <= 0 || cfg.seqs_per_subject <= 0)
    throw UsageError("generate_dataset: subject and sequence counts must be positive");
  std::error_code ec;
  fs::create_directories(out_root, ec);
  if (ec) throw IOFailure("cannot create output root: " + out_root);

  DatasetManifest manifest;
  manifest.config = cfg;

  char buf[32];
  for (int si = 0; si < cfg.n_subjects; ++si) {
    SubjectRecord sub;
    std::snprintf(buf, sizeof(buf), "%04d", si);
    sub.subject_id = buf;
    sub.identity_seed = derive_seed(cfg.master_seed, (uint64_t)si, 0, 0x1D);
    WalkerIdentity base = sample_identity(sub.identity_seed);

    for (int k = 0; k < cfg.seqs_per_subject; ++k) {
      SequenceRecord rec;
      std::snprintf(buf, sizeof(buf), "s%02d", k);
      rec.seq_id = buf;
      rec.view = k % kNumViewBuckets;
      rec.seed = derive_seed(cfg.master_seed, (uint64_t)si, (uint64_t)k, 0xA11CE);
      rec.frames = cfg.frames;

      WalkerIdentity id = base;
      bool cl = cfg.cloth_change && (k % 3 == 2);
      if (cl) id.clothing_profile = swapped_profile(base.clothing_profile);
      rec.condition = std::string(cl ? "cl-" : "nm-") + to_string(id.clothing_profile);

      RenderSpec spec;
      spec.n_frames = cfg.frames;
      spec.view = rec.view;
      spec.noise = cfg.noise;
      spec.rng_seed = rec.seed;
      auto [sils, pars] = render_sequence(id, spec);

      fs::path seq_dir = fs::path(out_root) / sub.subject_id / rec.seq_id;
      fs::create_directories(seq_dir / "sil", ec);
      fs::create_directories(seq_dir / "par", ec);
      if (ec) throw IOFailure("cannot create sequence directory: " + seq_dir.string());
      for (int t = 0; t < cfg.frames; ++t) {
        std::snprintf(buf, sizeof(buf), "%04d.png", t);
        ByteGrid vis(kAlignedH, kAlignedW, 0);
        for (size_t i = 0; i < vis.size(); ++i)
          vis.v[i] = sils.frames[t].pixels.v[i] ? 255 : 0;
        write_gray_png((seq_dir / "sil" / buf).string(), vis);
        write_palette_png((seq_dir / "par" / buf).string(), pars.frames[t].labels);
      }
      sub.sequences.push_back(rec);
    }
    manifest.subjects.push_back(sub);
  }

  save_manifest(manifest, (fs::path(out_root) / "manifest.json").string());

  // default split: desk-scale closed-set protocol, first sequence is the query
  std::ofstream split((fs::path(out_root) / "split.txt").string(), std::ios::binary);
  for (const auto& s : manifest.subjects) split << "train " << s.subject_id << "\n";
  for (const auto& s : manifest.subjects) split << "test " << s.subject_id << "\n";
  for (const auto& s : manifest.subjects)
    split << "query " << s.subject_id << " " << s.sequences.front().seq_id << "\n";
  return manifest;
}

}  // namespace xgait
