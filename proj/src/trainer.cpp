#include "xgait/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "xgait/nn/loss.hpp"

namespace fs = std::filesystem;

namespace xgait {

void Sgd::step(nn::ParamRefs<float>& refs, double lr) {
  for (auto* p : refs.params) {
    auto& v = velocity_[p->name];
    if (v.size() != p->w.numel()) v.assign(p->w.numel(), 0.0f);
    for (size_t i = 0; i < p->w.numel(); ++i) {
      float g = p->g.v[i] + (float)weight_decay_ * p->w.v[i];
      v[i] = (float)momentum_ * v[i] + g;
      p->w.v[i] -= (float)lr * v[i];
    }
  }
}

void Sgd::zero_grad(nn::ParamRefs<float>& refs) {
  for (auto* p : refs.params) p->g.zero();
}

DatasetIndex filter_index(const DatasetIndex& index, const std::set<std::string>& subjects) {
  DatasetIndex out;
  out.root = index.root;
  for (const auto& e : index.entries)
    if (subjects.count(e.subject_id)) out.entries.push_back(e);
  if (out.entries.empty()) throw SplitError("split selects no sequences from " + index.root);
  std::set<std::string> present;
  for (const auto& e : out.entries) present.insert(e.subject_id);
  int next = 0;
  for (const auto& s : present) out.id_to_label[s] = next++;
  for (size_t i = 0; i < out.entries.size(); ++i)
    out.by_subject[out.entries[i].subject_id].push_back((int)i);
  return out;
}

namespace {

double grad_norm(const nn::ParamRefs<float>& refs) {
  double acc = 0.0;
  for (const auto* p : refs.params)
    for (float g : p->g.v) acc += (double)g * g;
  return std::sqrt(acc);
}

void scale_grads(nn::ParamRefs<float>& refs, float s) {
  for (auto* p : refs.params)
    for (auto& g : p->g.v) g *= s;
}

void write_nan_dump(const std::string& path, long iter, double l_tri, double l_ce,
                    const nn::ParamRefs<float>& refs) {
  std::ofstream os(path);
  os << "training aborted on non-finite loss\n";
  os << "iteration " << iter << "\n";
  os << "l_tri " << l_tri << "\nl_ce " << l_ce << "\n";
  for (const auto* p : refs.params) {
    double wn = 0, gn = 0;
    for (float w : p->w.v) wn += (double)w * w;
    for (float g : p->g.v) gn += (double)g * g;
    os << p->name << " |w|=" << std::sqrt(wn) << " |g|=" << std::sqrt(gn) << "\n";
  }
}

std::string checkpoint_name(long iter) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%08ld.bin", iter);
  return buf;
}

}  // namespace

TrainResult train(const ExperimentConfig& cfg, const TrainOptions& opt) {
  cfg.validate();
  fs::create_directories(opt.out_dir);

  DatasetIndex full = index_dataset(cfg.data.root);
  std::string split_path = cfg.data.split.empty()
                               ? (fs::path(cfg.data.root) / "split.txt").string()
                               : cfg.data.split;
  Split split = load_split(split_path);
  DatasetIndex train_idx = filter_index(full, split.train);
  FrameStore store(train_idx);

  const int n_classes = train_idx.num_subjects();
  nn::ModelConfig mc = model_config(cfg, n_classes);
  nn::XGaitModel<float> model(mc);
  model.init(derive_seed(cfg.seed, 0x0de1));
  nn::ParamRefs<float> refs = model.collect();

  BatchSampler sampler(train_idx, store, derive_seed(cfg.seed, 0x5a3b));
  Sgd sgd(cfg.schedule.momentum, cfg.schedule.weight_decay);
  const std::string fingerprint = config_fingerprint(cfg);

  long start_iter = 1;
  if (!opt.resume_from.empty()) {
    Checkpoint ckpt = load_checkpoint(opt.resume_from);
    if (ckpt.fingerprint != fingerprint && !opt.allow_fingerprint_mismatch)
      throw DataError("checkpoint fingerprint " + ckpt.fingerprint +
                      " does not match config fingerprint " + fingerprint +
                      " (pass --allow-fingerprint-mismatch to override)");
    unpack_model(ckpt, refs);
    for (auto* p : refs.params) {
      auto it = ckpt.tensors.find("opt." + p->name);
      if (it != ckpt.tensors.end()) sgd.velocity()[p->name] = it->second.data;
    }
    auto rs = ckpt.rng_states.find("sampler");
    if (rs != ckpt.rng_states.end()) sampler.set_rng_state(rs->second);
    start_iter = (long)ckpt.iteration + 1;
  }

  auto save = [&](long iter, const std::string& path) {
    Checkpoint ckpt;
    ckpt.iteration = (uint64_t)iter;
    ckpt.fingerprint = fingerprint;
    pack_model(refs, ckpt);
    for (auto* p : refs.params) {
      auto it = sgd.velocity().find(p->name);
      if (it == sgd.velocity().end()) continue;
      Checkpoint::Entry e;
      e.kind = 2;
      e.shape = p->w.shape;
      e.data = it->second;
      ckpt.tensors["opt." + p->name] = std::move(e);
    }
    ckpt.rng_states["sampler"] = sampler.rng_state();
    save_checkpoint(ckpt, path);
  };

  std::ofstream log;
  std::string csv_path = (fs::path(opt.out_dir) / "metrics.csv").string();
  if (start_iter == 1) {
    log.open(csv_path, std::ios::binary);
    log << "iteration,l_tri,l_ce,total,lr,active_triplets\n";
  } else {
    log.open(csv_path, std::ios::binary | std::ios::app);
  }

  TrainResult result;
  char row[160];
  for (long iter = start_iter; iter <= cfg.schedule.total_iters; ++iter) {
    const double lr = cfg.schedule.lr_at(iter);
    Batch batch = sampler.sample(cfg.batch.subjects, cfg.batch.seqs_per_subject, cfg.batch.frames);
    nn::ModelInputs<float> in =
        nn::build_inputs<float>(batch, mc, model.feat_h(), model.feat_w());

    nn::Tensor<float> emb = model.forward(in, /*training=*/true);
    auto tri = nn::triplet_loss(emb, batch.labels, (float)cfg.loss.margin);
    nn::Tensor<float> logits = model.classify(emb);
    auto ce = nn::ce_loss(logits, batch.labels);
    double total = cfg.loss.alpha * (double)tri.loss + cfg.loss.beta * (double)ce.loss;

    if (!std::isfinite(total)) {
      std::string dump = (fs::path(opt.out_dir) / "nan_dump.txt").string();
      write_nan_dump(dump, iter, tri.loss, ce.loss, refs);
      throw NumericError("non-finite loss at iteration " + std::to_string(iter) +
                         "; diagnostics in " + dump);
    }

    // d total / d logits and d total / d embedding
    for (auto& g : ce.grad.v) g *= (float)cfg.loss.beta;
    nn::Tensor<float> gemb = model.classifier_backward(ce.grad);
    for (size_t i = 0; i < gemb.numel(); ++i)
      gemb.v[i] += (float)cfg.loss.alpha * tri.grad.v[i];
    model.backward(gemb);

    if (cfg.train.grad_clip > 0.0) {
      double norm = grad_norm(refs);
      if (norm > cfg.train.grad_clip) scale_grads(refs, (float)(cfg.train.grad_clip / norm));
    }
    sgd.step(refs, lr);
    Sgd::zero_grad(refs);

    if (iter % cfg.train.log_every == 0 || iter == cfg.schedule.total_iters) {
      std::snprintf(row, sizeof(row), "%ld,%.9g,%.9g,%.9g,%.9g,%ld\n", iter, (double)tri.loss,
                    (double)ce.loss, total, lr, tri.active);
      log << row;
    }
    if (cfg.train.checkpoint_every > 0 && iter % cfg.train.checkpoint_every == 0 &&
        iter != cfg.schedule.total_iters)
      save(iter, (fs::path(opt.out_dir) / checkpoint_name(iter)).string());
    result.final_total_loss = total;
  }

  result.iterations = cfg.schedule.total_iters;
  result.final_checkpoint = (fs::path(opt.out_dir) / "ckpt_final.bin").string();
  save(cfg.schedule.total_iters, result.final_checkpoint);
  result.metrics_csv = csv_path;
  return result;
}

}  // namespace xgait
