#include "xgait/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "xgait/png_io.hpp"

namespace fs = std::filesystem;

namespace xgait {

namespace {

Batch sequence_as_batch(const LoadedSequence& seq, const std::vector<int>& frames) {
  Batch b;
  b.p = 1;
  b.k = 1;
  b.t = (int)frames.size();
  const size_t px = (size_t)kAlignedH * kAlignedW;
  b.sil.assign(frames.size() * px, 0.0f);
  b.par.assign(frames.size() * px, 0);
  b.labels = {0};
  for (size_t ti = 0; ti < frames.size(); ++ti) {
    const ByteGrid& s = seq.sil[frames[ti]];
    const ByteGrid& q = seq.par[frames[ti]];
    for (size_t i = 0; i < px; ++i) {
      b.sil[ti * px + i] = (float)s.v[i];
      b.par[ti * px + i] = q.v[i];
    }
  }
  return b;
}

}  // namespace

EmbeddingTable extract_embeddings(nn::XGaitModel<float>& model, const DatasetIndex& index,
                                  const FrameStore& store, const std::vector<int>& entry_indices,
                                  int cap_frames) {
  EmbeddingTable table;
  for (int idx : entry_indices) {
    const SequenceEntry& entry = index.entries[idx];
    const LoadedSequence& seq = store.get(idx);
    std::vector<int> frames = cap_frame_indices((int)seq.sil.size(), cap_frames);
    Batch b = sequence_as_batch(seq, frames);
    nn::ModelInputs<float> in =
        nn::build_inputs<float>(b, model.config(), model.feat_h(), model.feat_w());
    nn::Tensor<float> emb = model.forward(in, /*training=*/false);
    EmbeddingEntry e;
    e.subject_id = entry.subject_id;
    e.seq_id = entry.seq_id;
    e.rows = emb.dim(1);
    e.dim = emb.dim(2);
    e.values = emb.v;
    table.entries.push_back(std::move(e));
  }
  return table;
}

DistanceMatrix distance_matrix(const EmbeddingTable& queries, const EmbeddingTable& gallery) {
  DistanceMatrix d;
  d.n_query = (int)queries.entries.size();
  d.n_gallery = (int)gallery.entries.size();
  d.values.assign((size_t)d.n_query * d.n_gallery, 0.0);
  d.excluded.assign((size_t)d.n_query * d.n_gallery, 0);
  for (const auto& q : queries.entries) {
    d.query_subjects.push_back(q.subject_id);
    d.query_seqs.push_back(q.seq_id);
  }
  for (const auto& g : gallery.entries) {
    d.gallery_subjects.push_back(g.subject_id);
    d.gallery_seqs.push_back(g.seq_id);
  }

  for (int qi = 0; qi < d.n_query; ++qi) {
    const auto& q = queries.entries[qi];
    for (int gi = 0; gi < d.n_gallery; ++gi) {
      const auto& g = gallery.entries[gi];
      if (q.rows != g.rows || q.dim != g.dim)
        throw DimMismatch("distance_matrix: embedding dims differ between query and gallery");
      if (q.subject_id == g.subject_id && q.seq_id == g.seq_id) {
        d.excluded[(size_t)qi * d.n_gallery + gi] = 1;
        continue;
      }
      double mean = 0.0;
      for (int r = 0; r < q.rows; ++r) {
        const float* a = q.values.data() + (size_t)r * q.dim;
        const float* b = g.values.data() + (size_t)r * q.dim;
        double sq = 0.0;
        for (int j = 0; j < q.dim; ++j) {
          double diff = (double)a[j] - (double)b[j];
          sq += diff * diff;
        }
        mean += std::sqrt(sq);
      }
      d.values[(size_t)qi * d.n_gallery + gi] = mean / q.rows;
    }
  }
  return d;
}

DistanceMatrix distance_fusion(const DistanceMatrix& a, const DistanceMatrix& b) {
  if (a.n_query != b.n_query || a.n_gallery != b.n_gallery)
    throw ShapeMismatch("distance_fusion: matrix shapes differ");
  if (a.query_seqs != b.query_seqs || a.gallery_seqs != b.gallery_seqs ||
      a.query_subjects != b.query_subjects || a.gallery_subjects != b.gallery_subjects)
    throw ShapeMismatch("distance_fusion: id order differs");
  DistanceMatrix out = a;
  for (size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] += b.values[i];
    out.excluded[i] = a.excluded[i] || b.excluded[i];
  }
  return out;
}

EvalReport compute_metrics(const DistanceMatrix& d) {
  EvalReport r;
  long rank1_hits = 0, rank5_hits = 0;
  double ap_sum = 0.0, inp_sum = 0.0;
  int valid = 0;

  for (int qi = 0; qi < d.n_query; ++qi) {
    std::vector<int> order;
    order.reserve(d.n_gallery);
    for (int gi = 0; gi < d.n_gallery; ++gi)
      if (!d.is_excluded(qi, gi)) order.push_back(gi);

    int relevant_total = 0;
    for (int gi : order)
      if (d.gallery_subjects[gi] == d.query_subjects[qi]) ++relevant_total;
    if (relevant_total == 0) {
      ++r.skipped_queries;
      continue;
    }
    ++valid;

    // ties broken by stable gallery order
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return d.at(qi, a) < d.at(qi, b); });

    bool top1 = false, top5 = false;
    int seen_relevant = 0;
    double ap = 0.0;
    int last_relevant_rank = 0;
    for (size_t pos = 0; pos < order.size(); ++pos) {
      bool rel = d.gallery_subjects[order[pos]] == d.query_subjects[qi];
      if (!rel) continue;
      ++seen_relevant;
      int rank = (int)pos + 1;
      if (rank <= 1) top1 = true;
      if (rank <= 5) top5 = true;
      ap += (double)seen_relevant / rank;
      last_relevant_rank = rank;
    }
    ap /= relevant_total;
    double inp = (double)relevant_total / last_relevant_rank;

    rank1_hits += top1;
    rank5_hits += top5;
    ap_sum += ap;
    inp_sum += inp;
    r.per_query_ap.push_back(ap);
    r.per_query_inp.push_back(inp);
  }

  if (valid == 0) throw NoValidQueries("no query has a relevant gallery item");
  r.n_queries = valid;
  r.rank1 = (double)rank1_hits / valid;
  r.rank5 = (double)rank5_hits / valid;
  r.mAP = ap_sum / valid;
  r.mINP = inp_sum / valid;
  return r;
}

void save_report_csv(const EvalReport& r, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IOFailure("cannot write report: " + path);
  char buf[256];
  os << "protocol,mode,fingerprint,seed,n_queries,skipped,rank1,rank5,mAP,mINP\n";
  std::snprintf(buf, sizeof(buf), "%s,%s,%s,%llu,%d,%d,%.9g,%.9g,%.9g,%.9g\n",
                r.protocol.c_str(), r.mode.c_str(), r.fingerprint.c_str(),
                (unsigned long long)r.seed, r.n_queries, r.skipped_queries, r.rank1, r.rank5,
                r.mAP, r.mINP);
  os << buf;
  os << "query_index,ap,inp\n";
  for (size_t i = 0; i < r.per_query_ap.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g\n", i, r.per_query_ap[i], r.per_query_inp[i]);
    os << buf;
  }
}

std::string report_table(const EvalReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "protocol %s | mode %s | fingerprint %s | seed %llu\n"
                "queries %d (skipped %d)\n"
                "Rank-1  Rank-5  mAP     mINP\n"
                "%-7.2f %-7.2f %-7.2f %-7.2f  (%%)\n",
                r.protocol.c_str(), r.mode.c_str(), r.fingerprint.c_str(),
                (unsigned long long)r.seed, r.n_queries, r.skipped_queries, 100.0 * r.rank1,
                100.0 * r.rank5, 100.0 * r.mAP, 100.0 * r.mINP);
  return buf;
}

void save_embeddings(const EmbeddingTable& t, const std::string& base_path) {
  std::ofstream os(base_path + ".bin", std::ios::binary);
  if (!os) throw IOFailure("cannot write embeddings: " + base_path + ".bin");
  const char magic[8] = {'X', 'G', 'E', 'M', 'B', '0', '0', '1'};
  os.write(magic, sizeof(magic));
  uint32_t n = (uint32_t)t.entries.size();
  os.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (const auto& e : t.entries) {
    auto put_str = [&](const std::string& s) {
      uint32_t len = (uint32_t)s.size();
      os.write(reinterpret_cast<const char*>(&len), sizeof(len));
      os.write(s.data(), len);
    };
    put_str(e.subject_id);
    put_str(e.seq_id);
    uint32_t rows = (uint32_t)e.rows, dim = (uint32_t)e.dim;
    os.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    os.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    os.write(reinterpret_cast<const char*>(e.values.data()),
             (std::streamsize)(e.values.size() * sizeof(float)));
  }
  std::ofstream sidecar(base_path + ".txt", std::ios::binary);
  sidecar << "# subject seq rows dim\n";
  for (const auto& e : t.entries)
    sidecar << e.subject_id << " " << e.seq_id << " " << e.rows << " " << e.dim << "\n";
}

EmbeddingTable load_embeddings(const std::string& bin_path) {
  std::ifstream is(bin_path, std::ios::binary);
  if (!is) throw IOFailure("embeddings not found: " + bin_path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (std::string(magic, 8) != "XGEMB001") throw DataError("not an embedding dump: " + bin_path);
  uint32_t n = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof(n));
  EmbeddingTable t;
  for (uint32_t i = 0; i < n; ++i) {
    auto get_str = [&]() {
      uint32_t len = 0;
      is.read(reinterpret_cast<char*>(&len), sizeof(len));
      std::string s(len, '\0');
      is.read(s.data(), len);
      return s;
    };
    EmbeddingEntry e;
    e.subject_id = get_str();
    e.seq_id = get_str();
    uint32_t rows = 0, dim = 0;
    is.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    is.read(reinterpret_cast<char*>(&dim), sizeof(dim));
    e.rows = (int)rows;
    e.dim = (int)dim;
    e.values.resize((size_t)rows * dim);
    is.read(reinterpret_cast<char*>(e.values.data()),
            (std::streamsize)(e.values.size() * sizeof(float)));
    t.entries.push_back(std::move(e));
  }
  if (!is) throw DataError("truncated embedding dump: " + bin_path);
  return t;
}

void emit_heatmaps(nn::XGaitModel<float>& model, const nn::ModelConfig& mc,
                   const LoadedSequence& seq, const std::vector<int>& frame_indices,
                   const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::vector<int> all(seq.sil.size());
  std::iota(all.begin(), all.end(), 0);
  Batch b = sequence_as_batch(seq, all);
  nn::ModelInputs<float> in = nn::build_inputs<float>(b, mc, model.feat_h(), model.feat_w());
  model.forward(in, /*training=*/false);

  const int c = model.feat_channels(), h = model.feat_h(), w = model.feat_w();
  const int f = (int)seq.sil.size();
  auto emit = [&](const nn::Tensor<float>& map, const char* name, int frame) {
    if (map.numel() == 0) return;
    std::vector<double> energy((size_t)h * w, 0.0);
    for (int ci = 0; ci < c; ++ci) {
      const float* plane = map.data() + ((size_t)ci * f + frame) * h * w;
      for (int i = 0; i < h * w; ++i) energy[i] += (double)plane[i] * plane[i];
    }
    double lo = 1e300, hi = -1e300;
    for (auto& e : energy) {
      e = std::sqrt(e);
      lo = std::min(lo, e);
      hi = std::max(hi, e);
    }
    const double range = hi > lo ? hi - lo : 1.0;
    // nearest-neighbor upscale for viewing
    const int scale = 8;
    ByteGrid img(h * scale, w * scale, 0);
    for (int y = 0; y < h * scale; ++y)
      for (int x = 0; x < w * scale; ++x)
        img.at(y, x) =
            (uint8_t)std::lround(255.0 * (energy[(size_t)(y / scale) * w + x / scale] - lo) / range);
    char fname[64];
    std::snprintf(fname, sizeof(fname), "f%04d_%s.png", frame, name);
    write_gray_png((fs::path(out_dir) / fname).string(), img);
  };

  for (int frame : frame_indices) {
    if (frame < 0 || frame >= f) throw UsageError("heatmap frame index out of range");
    emit(model.map_s(), "Fs", frame);
    emit(model.map_p(), "Fp", frame);
    emit(model.map_ga(), "Fga", frame);
    emit(model.map_pa(), "Fpa", frame);
  }
}

}  // namespace xgait
