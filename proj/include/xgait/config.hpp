#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xgait/nn/model.hpp"

namespace xgait {

struct DataConfig {
  std::string root;
  std::string split;        // defaults to <root>/split.txt
  int cap_frames = 720;     // inference-time frame cap
  std::string augmentation = "none";
};

struct LossConfig {
  double margin = 0.2;
  double alpha = 1.0;
  double beta = 1.0;
};

struct ScheduleConfig {
  double base_lr = 0.1;
  std::vector<long> milestones;  // empty: derived as total/3, 2/3, 5/6
  double decay = 0.1;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  long total_iters = 2000;

  std::vector<long> resolved_milestones() const;
  double lr_at(long iter) const;  // iterations are 1-based
};

struct BatchConfig {
  int subjects = 8;       // P
  int seqs_per_subject = 2;  // K
  int frames = 4;         // T
};

struct TrainConfig {
  long checkpoint_every = 500;
  long log_every = 1;
  double grad_clip = 0.0;  // 0 disables clipping; NaN aborts either way
};

struct ModelSection {
  std::string parsing_input = "one-hot";  // one-hot | index
  int embedding_dim = 64;
  std::vector<int> hpm_scales = {1, 2, 4};
  int reduction_ratio = 16;
  double gamma_init = 1.0;
  std::string gap_mode = "per-frame";  // per-frame | sequence
  nn::EncoderConfig encoder;
};

struct AblationConfig {
  std::string fusion_mode = "xgait";  // xgait | sil-only | par-only | feature-fusion
  bool disable_gcm = false;
  bool disable_pcm = false;
  bool share_backbone = false;
  bool share_fmh = false;
  std::string division = "learnable";  // simple | fixed | learnable
};

struct ExperimentConfig {
  uint64_t seed = 1;
  std::string preset = "tiny";  // tiny | paper-shape
  DataConfig data;
  ModelSection model;
  AblationConfig ablation;
  LossConfig loss;
  ScheduleConfig schedule;
  BatchConfig batch;
  TrainConfig train;

  void validate() const;
};

ExperimentConfig default_config(const std::string& preset = "tiny");
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// FNV-1a over the canonical JSON dump, as a 16-hex-digit string.
std::string config_fingerprint(const ExperimentConfig& cfg);
uint64_t fnv1a(const std::string& s);

// "--set a.b.c=value" style override; value is parsed as a JSON literal,
// falling back to a plain string.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Maps the experiment config onto the model wiring.
nn::ModelConfig model_config(const ExperimentConfig& cfg, int n_classes);

}  // namespace xgait
