#pragma once

#include <memory>
#include <string>
#include <vector>

#include "xgait/eval.hpp"
#include "xgait/trainer.hpp"

namespace xgait {

// Dataset, split and query/gallery assignment shared by all eval modes.
struct EvalSetup {
  DatasetIndex test_index;
  std::unique_ptr<FrameStore> store;
  std::vector<int> query_idx;    // into test_index.entries, one per subject
  std::vector<int> gallery_idx;  // remaining test sequences
  int train_classes = 0;         // classifier width used at training time
};

EvalSetup build_eval_setup(const ExperimentConfig& cfg);

// Loads a trained model; the checkpoint fingerprint must match cfg.
std::unique_ptr<nn::XGaitModel<float>> load_model(const ExperimentConfig& cfg, int n_classes,
                                                  const std::string& checkpoint_path,
                                                  bool allow_fingerprint_mismatch = false);

// Applies the derived fusion_mode to a copy of the config.
ExperimentConfig config_for_mode(const ExperimentConfig& base, const std::string& mode);

struct EvaluateOptions {
  std::string mode = "xgait";      // xgait | sil-only | par-only | feature-fusion | distance-fusion
  std::string protocol = "gait3d"; // gait3d | ccpg-full | ccpg-up | ccpg-dn
  std::string checkpoint;          // single-model modes
  std::string checkpoint_sil;      // distance-fusion
  std::string checkpoint_par;
  bool allow_fingerprint_mismatch = false;
  std::string dump_embeddings_base;  // optional embedding dump path base
};

EvalReport run_protocol(const ExperimentConfig& cfg, const EvaluateOptions& opt);

// Recomputes metrics from dumped embeddings (the `metrics` subcommand).
EvalReport metrics_from_dumps(const std::string& query_bin, const std::string& gallery_bin,
                              const std::string& protocol);

struct AblationRow {
  std::string section;
  std::string name;
  std::string fingerprint;
  EvalReport report;
};

// Trains and evaluates every row of the ablation grids (representations,
// fusion modes, GCM/PCM, division strategies, shareability, reduction
// ratios), reusing checkpoints across rows with identical fingerprints.
std::vector<AblationRow> run_ablation_grid(const ExperimentConfig& base,
                                           const std::string& out_dir);

void save_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

}  // namespace xgait
