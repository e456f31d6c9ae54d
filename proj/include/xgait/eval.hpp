#pragma once

#include <string>
#include <vector>

#include "xgait/config.hpp"
#include "xgait/dataset.hpp"
#include "xgait/nn/model.hpp"

namespace xgait {

struct EmbeddingEntry {
  std::string subject_id;
  std::string seq_id;
  int rows = 0;
  int dim = 0;
  std::vector<float> values;  // rows x dim
};

struct EmbeddingTable {
  std::vector<EmbeddingEntry> entries;
};

// Eval-mode forward of whole sequences, all frames capped at cap_frames by
// uniform temporal subsampling. Deterministic.
EmbeddingTable extract_embeddings(nn::XGaitModel<float>& model, const DatasetIndex& index,
                                  const FrameStore& store, const std::vector<int>& entry_indices,
                                  int cap_frames);

struct DistanceMatrix {
  int n_query = 0;
  int n_gallery = 0;
  std::vector<double> values;     // n_query x n_gallery, mean per-strip Euclidean
  std::vector<uint8_t> excluded;  // same-sequence self matches and protocol filters
  std::vector<std::string> query_subjects, query_seqs;
  std::vector<std::string> gallery_subjects, gallery_seqs;

  double at(int q, int g) const { return values[(size_t)q * n_gallery + g]; }
  bool is_excluded(int q, int g) const { return excluded[(size_t)q * n_gallery + g] != 0; }
};

DistanceMatrix distance_matrix(const EmbeddingTable& queries, const EmbeddingTable& gallery);

// Table-4 style fusion: element-wise sum of two per-branch matrices.
DistanceMatrix distance_fusion(const DistanceMatrix& a, const DistanceMatrix& b);

struct EvalReport {
  double rank1 = 0.0;
  double rank5 = 0.0;
  double mAP = 0.0;
  double mINP = 0.0;
  int n_queries = 0;
  int skipped_queries = 0;  // queries without any relevant gallery item
  std::vector<double> per_query_ap;
  std::vector<double> per_query_inp;
  std::string protocol = "gait3d";
  std::string mode = "xgait";
  std::string fingerprint;
  uint64_t seed = 0;
};

// Rank-k / mAP / mINP with deterministic tie-breaking by gallery order.
EvalReport compute_metrics(const DistanceMatrix& d);

void save_report_csv(const EvalReport& r, const std::string& path);
std::string report_table(const EvalReport& r);

void save_embeddings(const EmbeddingTable& t, const std::string& base_path);
EmbeddingTable load_embeddings(const std::string& bin_path);

// §-style heatmaps: per-frame channel energy (L2 over channels) of each
// captured feature map, min-max normalized, nearest-upscaled PNG.
void emit_heatmaps(nn::XGaitModel<float>& model, const nn::ModelConfig& mc,
                   const LoadedSequence& seq, const std::vector<int>& frame_indices,
                   const std::string& out_dir);

}  // namespace xgait
