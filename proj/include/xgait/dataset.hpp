#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "xgait/frames.hpp"
#include "xgait/rng.hpp"

namespace xgait {

struct SequenceEntry {
  std::string subject_id;
  std::string seq_id;
  std::string sil_dir;
  std::string par_dir;
  int view = 0;
  std::string condition;
  int frame_count = 0;
};

struct DatasetIndex {
  std::string root;
  std::vector<SequenceEntry> entries;
  std::map<std::string, int> id_to_label;  // dense, sorted by subject_id
  std::map<std::string, std::vector<int>> by_subject;

  int num_subjects() const { return (int)id_to_label.size(); }
  const SequenceEntry& find(const std::string& subject, const std::string& seq) const;
};

// Walks the on-disk layout, validates both modalities per sequence
// (equal frame counts) and builds a stable label mapping.
DatasetIndex index_dataset(const std::string& root);

// Loaded pixel data for one sequence, both modalities.
struct LoadedSequence {
  std::vector<ByteGrid> sil;  // values in {0,1}
  std::vector<ByteGrid> par;  // labels in {0..11}
};

LoadedSequence load_sequence(const SequenceEntry& entry);

// In-memory pixel cache; the synthetic datasets are small enough to hold.
class FrameStore {
 public:
  explicit FrameStore(const DatasetIndex& index);
  const LoadedSequence& get(int entry_idx) const { return sequences_[entry_idx]; }

 private:
  std::vector<LoadedSequence> sequences_;
};

// train/test subject assignment plus one query sequence per test subject.
struct Split {
  std::set<std::string> train;
  std::set<std::string> test;
  std::map<std::string, std::string> query_seq;
};

Split load_split(const std::string& path);

// n frame indices in sampled order: without replacement when the sequence
// is long enough, with replacement otherwise.
std::vector<int> sample_frames_unordered(int seq_len, int n, Rng& rng);

// Uniform temporal subsampling used to cap inference-time sequences.
std::vector<int> cap_frame_indices(int seq_len, int cap);

struct Batch {
  int p = 0;  // subjects
  int k = 0;  // sequences per subject
  int t = 0;  // frames per sequence
  std::vector<float> sil;     // [n_frames(=p*k*t)][64][44], values {0,1}
  std::vector<uint8_t> par;   // [n_frames][64][44], label planes
  std::vector<int> labels;    // p*k class indices, one per sequence
  int n_seqs() const { return p * k; }
  int n_frames() const { return p * k * t; }
};

class BatchSampler {
 public:
  BatchSampler(const DatasetIndex& index, const FrameStore& store, uint64_t seed);

  // P distinct subjects, K sequences each (with replacement at the
  // sequence level when a subject has fewer than K), T frames each.
  Batch sample(int p, int k, int t_frames);

  std::string rng_state() const { return rng_.serialize(); }
  void set_rng_state(const std::string& s) { rng_.deserialize(s); }

 private:
  const DatasetIndex& index_;
  const FrameStore& store_;
  std::vector<std::string> subjects_;
  Rng rng_;
};

}  // namespace xgait
