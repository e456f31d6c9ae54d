#include "xgait/config.hpp"

#include <fstream>
#include <set>

#include "xgait/errors.hpp"

using json = nlohmann::json;

namespace xgait {

std::vector<long> ScheduleConfig::resolved_milestones() const {
  if (!milestones.empty()) return milestones;
  // scaled from the paper-shape 400K/800K/1000K of 1200K total; very short
  // runs collapse neighboring fractions, so keep the increasing subset
  std::vector<long> ms;
  for (long m : {total_iters / 3, total_iters * 2 / 3, total_iters * 5 / 6})
    if (m > 0 && (ms.empty() || m > ms.back())) ms.push_back(m);
  return ms;
}

double ScheduleConfig::lr_at(long iter) const {
  double lr = base_lr;
  for (long m : resolved_milestones())
    if (iter >= m) lr *= decay;
  return lr;
}

ExperimentConfig default_config(const std::string& preset) {
  ExperimentConfig cfg;
  cfg.preset = preset;
  if (preset == "tiny") {
    // desk-scale defaults; feature maps come out 64x8x6
    cfg.model.embedding_dim = 64;
    cfg.model.hpm_scales = {1, 2, 4};
    cfg.model.encoder.stem_channels = 16;
    cfg.model.encoder.stage_channels = {16, 32, 64};
    cfg.model.encoder.stage_strides = {2, 2, 2};
    cfg.model.encoder.blocks_per_stage = {1, 1, 1};
    cfg.batch = {6, 2, 3};
    cfg.schedule.total_iters = 2000;
  } else if (preset == "paper-shape") {
    cfg.model.embedding_dim = 256;
    cfg.model.hpm_scales = {1, 2, 4, 8, 16};
    cfg.model.encoder.stem_channels = 64;
    cfg.model.encoder.stage_channels = {64, 128, 256};
    cfg.model.encoder.stage_strides = {1, 2, 2};
    cfg.model.encoder.blocks_per_stage = {1, 1, 1};
    cfg.batch = {32, 2, 30};
    cfg.schedule.total_iters = 1200000;
    cfg.schedule.milestones = {400000, 800000, 1000000};
    cfg.train.checkpoint_every = 20000;
  } else {
    throw UsageError("unknown preset: " + preset + " (expected tiny or paper-shape)");
  }
  return cfg;
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw UsageError("unknown config key '" + where + it.key() + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw UsageError("config root must be a JSON object");
  reject_unknown(j, {"seed", "preset", "data", "model", "ablation", "loss", "schedule", "batch",
                     "train"},
                 "");

  std::string preset = "tiny";
  read(j, "preset", preset);
  ExperimentConfig cfg = default_config(preset);
  read(j, "seed", cfg.seed);

  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown(d, {"root", "split", "cap_frames", "augmentation"}, "data.");
    read(d, "root", cfg.data.root);
    read(d, "split", cfg.data.split);
    read(d, "cap_frames", cfg.data.cap_frames);
    read(d, "augmentation", cfg.data.augmentation);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown(m,
                   {"parsing_input", "embedding_dim", "hpm_scales", "reduction_ratio",
                    "gamma_init", "gap_mode", "encoder"},
                   "model.");
    read(m, "parsing_input", cfg.model.parsing_input);
    read(m, "embedding_dim", cfg.model.embedding_dim);
    read(m, "hpm_scales", cfg.model.hpm_scales);
    read(m, "reduction_ratio", cfg.model.reduction_ratio);
    read(m, "gamma_init", cfg.model.gamma_init);
    read(m, "gap_mode", cfg.model.gap_mode);
    if (m.contains("encoder")) {
      const json& e = m.at("encoder");
      reject_unknown(e, {"stem_channels", "stage_channels", "stage_strides", "blocks_per_stage"},
                     "model.encoder.");
      read(e, "stem_channels", cfg.model.encoder.stem_channels);
      read(e, "stage_channels", cfg.model.encoder.stage_channels);
      read(e, "stage_strides", cfg.model.encoder.stage_strides);
      read(e, "blocks_per_stage", cfg.model.encoder.blocks_per_stage);
    }
  }
  if (j.contains("ablation")) {
    const json& a = j.at("ablation");
    reject_unknown(
        a, {"fusion_mode", "disable_gcm", "disable_pcm", "share_backbone", "share_fmh", "division"},
        "ablation.");
    read(a, "fusion_mode", cfg.ablation.fusion_mode);
    read(a, "disable_gcm", cfg.ablation.disable_gcm);
    read(a, "disable_pcm", cfg.ablation.disable_pcm);
    read(a, "share_backbone", cfg.ablation.share_backbone);
    read(a, "share_fmh", cfg.ablation.share_fmh);
    read(a, "division", cfg.ablation.division);
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    reject_unknown(l, {"margin", "alpha", "beta"}, "loss.");
    read(l, "margin", cfg.loss.margin);
    read(l, "alpha", cfg.loss.alpha);
    read(l, "beta", cfg.loss.beta);
  }
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    reject_unknown(
        s, {"base_lr", "milestones", "decay", "weight_decay", "momentum", "total_iters"},
        "schedule.");
    read(s, "base_lr", cfg.schedule.base_lr);
    read(s, "milestones", cfg.schedule.milestones);
    read(s, "decay", cfg.schedule.decay);
    read(s, "weight_decay", cfg.schedule.weight_decay);
    read(s, "momentum", cfg.schedule.momentum);
    read(s, "total_iters", cfg.schedule.total_iters);
  }
  if (j.contains("batch")) {
    const json& b = j.at("batch");
    reject_unknown(b, {"subjects", "seqs_per_subject", "frames"}, "batch.");
    read(b, "subjects", cfg.batch.subjects);
    read(b, "seqs_per_subject", cfg.batch.seqs_per_subject);
    read(b, "frames", cfg.batch.frames);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown(t, {"checkpoint_every", "log_every", "grad_clip"}, "train.");
    read(t, "checkpoint_every", cfg.train.checkpoint_every);
    read(t, "log_every", cfg.train.log_every);
    read(t, "grad_clip", cfg.train.grad_clip);
  }
  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  if (loss.margin < 0) throw UsageError("loss.margin must be >= 0");
  if (model.parsing_input != "one-hot" && model.parsing_input != "index")
    throw UsageError("model.parsing_input must be one-hot or index");
  if (model.gap_mode != "per-frame" && model.gap_mode != "sequence")
    throw UsageError("model.gap_mode must be per-frame or sequence");
  if (ablation.division != "simple" && ablation.division != "fixed" &&
      ablation.division != "learnable")
    throw UsageError("ablation.division must be simple, fixed or learnable");
  const std::set<std::string> modes = {"xgait", "sil-only", "par-only", "feature-fusion"};
  if (!modes.count(ablation.fusion_mode))
    throw UsageError("ablation.fusion_mode must be xgait, sil-only, par-only or feature-fusion");
  if (model.reduction_ratio < 1) throw UsageError("model.reduction_ratio must be >= 1");
  if (batch.subjects < 2 || batch.seqs_per_subject < 1 || batch.frames < 1)
    throw UsageError("batch must have >= 2 subjects and positive sequence/frame counts");
  auto ms = schedule.resolved_milestones();
  for (size_t i = 0; i < ms.size(); ++i) {
    if (ms[i] >= schedule.total_iters)
      throw UsageError("schedule.milestones must be < total_iters");
    if (i > 0 && ms[i] <= ms[i - 1])
      throw UsageError("schedule.milestones must be strictly increasing");
  }
  if (ablation.share_backbone && model.parsing_input != "index" &&
      ablation.fusion_mode != "sil-only" && ablation.fusion_mode != "par-only")
    throw UsageError("ablation.share_backbone requires model.parsing_input=index");
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("config file not found: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw UsageError("malformed config " + path + ": " + e.what());
  }
  return parse_config(j);
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["preset"] = cfg.preset;
  j["data"] = {{"root", cfg.data.root},
               {"split", cfg.data.split},
               {"cap_frames", cfg.data.cap_frames},
               {"augmentation", cfg.data.augmentation}};
  j["model"] = {{"parsing_input", cfg.model.parsing_input},
                {"embedding_dim", cfg.model.embedding_dim},
                {"hpm_scales", cfg.model.hpm_scales},
                {"reduction_ratio", cfg.model.reduction_ratio},
                {"gamma_init", cfg.model.gamma_init},
                {"gap_mode", cfg.model.gap_mode},
                {"encoder",
                 {{"stem_channels", cfg.model.encoder.stem_channels},
                  {"stage_channels", cfg.model.encoder.stage_channels},
                  {"stage_strides", cfg.model.encoder.stage_strides},
                  {"blocks_per_stage", cfg.model.encoder.blocks_per_stage}}}};
  j["ablation"] = {{"fusion_mode", cfg.ablation.fusion_mode},
                   {"disable_gcm", cfg.ablation.disable_gcm},
                   {"disable_pcm", cfg.ablation.disable_pcm},
                   {"share_backbone", cfg.ablation.share_backbone},
                   {"share_fmh", cfg.ablation.share_fmh},
                   {"division", cfg.ablation.division}};
  j["loss"] = {{"margin", cfg.loss.margin}, {"alpha", cfg.loss.alpha}, {"beta", cfg.loss.beta}};
  j["schedule"] = {{"base_lr", cfg.schedule.base_lr},
                   {"milestones", cfg.schedule.milestones},
                   {"decay", cfg.schedule.decay},
                   {"weight_decay", cfg.schedule.weight_decay},
                   {"momentum", cfg.schedule.momentum},
                   {"total_iters", cfg.schedule.total_iters}};
  j["batch"] = {{"subjects", cfg.batch.subjects},
                {"seqs_per_subject", cfg.batch.seqs_per_subject},
                {"frames", cfg.batch.frames}};
  j["train"] = {{"checkpoint_every", cfg.train.checkpoint_every},
                {"log_every", cfg.train.log_every},
                {"grad_clip", cfg.train.grad_clip}};
  return j;
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
  // nlohmann objects iterate sorted by key, so dump() is canonical
  uint64_t h = fnv1a(config_to_json(cfg).dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
  return buf;
}

void apply_override(json& j, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw UsageError("override must look like key.path=value: " + assignment);
  std::string path = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);

  json* node = &j;
  size_t pos = 0;
  while (true) {
    size_t dot = path.find('.', pos);
    std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (key.empty()) throw UsageError("empty key in override path: " + assignment);
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
      break;
    }
    node = &(*node)[key];
    pos = dot + 1;
  }
}

nn::ModelConfig model_config(const ExperimentConfig& cfg, int n_classes) {
  nn::ModelConfig mc;
  const std::string& mode = cfg.ablation.fusion_mode;
  mc.branch = mode == "sil-only"   ? nn::BranchMode::kSilOnly
              : mode == "par-only" ? nn::BranchMode::kParOnly
                                   : nn::BranchMode::kBoth;
  mc.disable_gcm = cfg.ablation.disable_gcm || mode == "feature-fusion";
  mc.disable_pcm = cfg.ablation.disable_pcm || mode == "feature-fusion";
  mc.share_backbone = cfg.ablation.share_backbone && mc.branch == nn::BranchMode::kBoth;
  mc.share_fmh = cfg.ablation.share_fmh;
  mc.parsing_input =
      cfg.model.parsing_input == "index" ? nn::ParsingInput::kIndex : nn::ParsingInput::kOneHot;
  mc.encoder = cfg.model.encoder;
  mc.hpm.scales = cfg.model.hpm_scales;
  mc.hpm.out_dim = cfg.model.embedding_dim;
  mc.reduction_ratio = cfg.model.reduction_ratio;
  mc.division = cfg.ablation.division == "simple"  ? nn::DivisionMode::kSimple
                : cfg.ablation.division == "fixed" ? nn::DivisionMode::kFixed
                                                   : nn::DivisionMode::kLearnable;
  mc.gamma_init = cfg.model.gamma_init;
  mc.per_sequence_gap = cfg.model.gap_mode == "sequence";
  mc.n_classes = n_classes;
  return mc;
}

}  // namespace xgait
