#include "xgait/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "xgait/errors.hpp"
#include "xgait/png_io.hpp"
#include "xgait/synthgait.hpp"

namespace fs = std::filesystem;

namespace xgait {

const SequenceEntry& DatasetIndex::find(const std::string& subject, const std::string& seq) const {
  for (const auto& e : entries)
    if (e.subject_id == subject && e.seq_id == seq) return e;
  throw DataError("sequence not in index: " + subject + "/" + seq);
}

namespace {

int count_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) return -1;
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") ++n;
  return n;
}

std::vector<std::string> sorted_pngs(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

DatasetIndex index_dataset(const std::string& root) {
  if (!fs::is_directory(root)) throw LayoutError("dataset root does not exist: " + root);

  DatasetIndex index;
  index.root = root;

  std::vector<std::string> subjects;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) subjects.push_back(e.path().filename().string());
  std::sort(subjects.begin(), subjects.end());
  if (subjects.empty()) throw LayoutError("dataset root has no subject directories: " + root);

  std::vector<std::string> offenders;
  for (const auto& subject : subjects) {
    std::vector<std::string> seqs;
    for (const auto& e : fs::directory_iterator(fs::path(root) / subject))
      if (e.is_directory()) seqs.push_back(e.path().filename().string());
    std::sort(seqs.begin(), seqs.end());
    for (const auto& seq : seqs) {
      fs::path seq_dir = fs::path(root) / subject / seq;
      int n_sil = count_pngs(seq_dir / "sil");
      int n_par = count_pngs(seq_dir / "par");
      if (n_sil < 0 || n_par < 0 || n_sil != n_par || n_sil == 0) {
        offenders.push_back(subject + "/" + seq + " (sil=" + std::to_string(n_sil) +
                            ", par=" + std::to_string(n_par) + ")");
        continue;
      }
      SequenceEntry entry;
      entry.subject_id = subject;
      entry.seq_id = seq;
      entry.sil_dir = (seq_dir / "sil").string();
      entry.par_dir = (seq_dir / "par").string();
      entry.frame_count = n_sil;
      index.entries.push_back(entry);
    }
  }
  if (!offenders.empty()) {
    std::string msg = "sequences with mismatched or missing modalities:";
    for (const auto& o : offenders) msg += " " + o;
    throw ModalityMismatch(msg);
  }
  if (index.entries.empty()) throw LayoutError("no valid sequences under " + root);

  // view/condition tags come from the manifest when present
  fs::path manifest_path = fs::path(root) / "manifest.json";
  if (fs::exists(manifest_path)) {
    DatasetManifest m = load_manifest(manifest_path.string());
    std::map<std::pair<std::string, std::string>, const SequenceRecord*> recs;
    for (const auto& s : m.subjects)
      for (const auto& q : s.sequences) recs[{s.subject_id, q.seq_id}] = &q;
    for (auto& e : index.entries) {
      auto it = recs.find({e.subject_id, e.seq_id});
      if (it != recs.end()) {
        e.view = it->second->view;
        e.condition = it->second->condition;
      }
    }
  }

  std::set<std::string> present;
  for (const auto& e : index.entries) present.insert(e.subject_id);
  int next = 0;
  for (const auto& s : present) index.id_to_label[s] = next++;
  for (size_t i = 0; i < index.entries.size(); ++i)
    index.by_subject[index.entries[i].subject_id].push_back((int)i);
  return index;
}

LoadedSequence load_sequence(const SequenceEntry& entry) {
  LoadedSequence seq;
  for (const auto& f : sorted_pngs(entry.sil_dir)) seq.sil.push_back(read_silhouette_png(f));
  for (const auto& f : sorted_pngs(entry.par_dir)) seq.par.push_back(read_parsing_png(f));
  if (seq.sil.size() != seq.par.size())
    throw ModalityMismatch("frame count mismatch while loading " + entry.subject_id + "/" +
                           entry.seq_id);
  for (size_t i = 0; i < seq.sil.size(); ++i)
    if (seq.sil[i].h != kAlignedH || seq.sil[i].w != kAlignedW || !seq.par[i].same_shape(seq.sil[i]))
      throw DataError("frame is not aligned 64x44 in " + entry.subject_id + "/" + entry.seq_id);
  return seq;
}

FrameStore::FrameStore(const DatasetIndex& index) {
  sequences_.reserve(index.entries.size());
  for (const auto& e : index.entries) sequences_.push_back(load_sequence(e));
}

Split load_split(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw SplitError("split file not found: " + path);
  Split split;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind, subject, seq;
    ls >> kind >> subject;
    if (kind == "train" && !subject.empty()) {
      split.train.insert(subject);
    } else if (kind == "test" && !subject.empty()) {
      split.test.insert(subject);
    } else if (kind == "query") {
      ls >> seq;
      if (subject.empty() || seq.empty())
        throw SplitError("malformed query line " + std::to_string(lineno) + " in " + path);
      split.query_seq[subject] = seq;
    } else {
      throw SplitError("malformed line " + std::to_string(lineno) + " in " + path);
    }
  }
  if (split.train.empty() && split.test.empty())
    throw SplitError("split file assigns no subjects: " + path);
  return split;
}

std::vector<int> sample_frames_unordered(int seq_len, int n, Rng& rng) {
  std::vector<int> out;
  out.reserve(n);
  if (seq_len >= n) {
    // partial Fisher-Yates: first n entries of a random permutation
    std::vector<int> pool(seq_len);
    for (int i = 0; i < seq_len; ++i) pool[i] = i;
    for (int i = 0; i < n; ++i) {
      int j = i + (int)rng.randint((uint64_t)(seq_len - i));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
  } else {
    for (int i = 0; i < n; ++i) out.push_back((int)rng.randint((uint64_t)seq_len));
  }
  return out;
}

std::vector<int> cap_frame_indices(int seq_len, int cap) {
  std::vector<int> idx;
  if (seq_len <= cap) {
    idx.resize(seq_len);
    for (int i = 0; i < seq_len; ++i) idx[i] = i;
  } else {
    idx.resize(cap);
    for (int i = 0; i < cap; ++i) idx[i] = (int)((long)i * seq_len / cap);
  }
  return idx;
}

BatchSampler::BatchSampler(const DatasetIndex& index, const FrameStore& store, uint64_t seed)
    : index_(index), store_(store), rng_(seed) {
  for (const auto& [subject, _] : index.by_subject) subjects_.push_back(subject);
}

Batch BatchSampler::sample(int p, int k, int t_frames) {
  if ((int)subjects_.size() < p)
    throw InsufficientSubjects("need " + std::to_string(p) + " subjects, dataset has " +
                               std::to_string(subjects_.size()));
  Batch batch;
  batch.p = p;
  batch.k = k;
  batch.t = t_frames;
  const size_t frame_px = (size_t)kAlignedH * kAlignedW;
  batch.sil.assign((size_t)p * k * t_frames * frame_px, 0.0f);
  batch.par.assign((size_t)p * k * t_frames * frame_px, 0);
  batch.labels.resize((size_t)p * k);

  std::vector<std::string> pick = subjects_;
  rng_.shuffle(pick);
  pick.resize(p);

  int seq_slot = 0;
  for (const auto& subject : pick) {
    const auto& pool = index_.by_subject.at(subject);
    std::vector<int> chosen;
    if ((int)pool.size() >= k) {
      std::vector<int> shuffled = pool;
      rng_.shuffle(shuffled);
      chosen.assign(shuffled.begin(), shuffled.begin() + k);
    } else {
      for (int i = 0; i < k; ++i) chosen.push_back(pool[rng_.randint(pool.size())]);
    }
    for (int entry_idx : chosen) {
      const auto& seq = store_.get(entry_idx);
      auto frames = sample_frames_unordered((int)seq.sil.size(), t_frames, rng_);
      for (int ti = 0; ti < t_frames; ++ti) {
        size_t dst = ((size_t)seq_slot * t_frames + ti) * frame_px;
        const ByteGrid& s = seq.sil[frames[ti]];
        const ByteGrid& q = seq.par[frames[ti]];
        for (size_t i = 0; i < frame_px; ++i) {
          batch.sil[dst + i] = (float)s.v[i];
          batch.par[dst + i] = q.v[i];
        }
      }
      batch.labels[seq_slot] = index_.id_to_label.at(subject);
      ++seq_slot;
    }
  }
  return batch;
}

}  // namespace xgait
