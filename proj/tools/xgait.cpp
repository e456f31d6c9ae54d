#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "xgait/protocol.hpp"
#include "xgait/png_io.hpp"
#include "xgait/synthgait.hpp"
#include "xgait/version.hpp"

namespace fs = std::filesystem;
using namespace xgait;

namespace {

ExperimentConfig resolve_config(const std::string& config_path,
                                const std::vector<std::string>& overrides,
                                const std::string& data_root, uint64_t seed, bool seed_set) {
  nlohmann::json j;
  if (!config_path.empty()) {
    std::ifstream is(config_path);
    if (!is) throw UsageError("config file not found: " + config_path);
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("malformed config " + config_path + ": " + e.what());
    }
  } else {
    j = nlohmann::json::object();
  }
  for (const auto& o : overrides) apply_override(j, o);
  if (!data_root.empty()) j["data"]["root"] = data_root;
  if (seed_set) j["seed"] = seed;
  return parse_config(j);
}

int cmd_generate(int subjects, int seqs, int frames, double noise, uint64_t seed,
                 const std::string& out, bool no_cloth_change) {
  GenerateConfig gc;
  gc.n_subjects = subjects;
  gc.seqs_per_subject = seqs;
  gc.frames = frames;
  gc.noise = noise;
  gc.master_seed = seed;
  gc.cloth_change = !no_cloth_change;
  DatasetManifest m = generate_dataset(gc, out);
  std::cout << "wrote " << m.subjects.size() << " subjects x " << seqs << " sequences to " << out
            << "\n";
  return 0;
}

int cmd_intersect(const std::string& in_root, const std::string& out_root) {
  DatasetIndex index = index_dataset(in_root);
  char buf[32];
  for (const auto& entry : index.entries) {
    LoadedSequence seq = load_sequence(entry);
    fs::path dst = fs::path(out_root) / entry.subject_id / entry.seq_id;
    fs::create_directories(dst / "sil");
    fs::create_directories(dst / "par");
    for (size_t t = 0; t < seq.sil.size(); ++t) {
      SilhouetteFrame sf;
      sf.pixels = seq.sil[t];
      ParsingFrame pf;
      pf.labels = seq.par[t];
      auto [sil_star, par_star] = intersect(sf, pf);
      std::snprintf(buf, sizeof(buf), "%04zu.png", t);
      ByteGrid vis(sil_star.pixels.h, sil_star.pixels.w, 0);
      for (size_t i = 0; i < vis.size(); ++i) vis.v[i] = sil_star.pixels.v[i] ? 255 : 0;
      write_gray_png((dst / "sil" / buf).string(), vis);
      write_palette_png((dst / "par" / buf).string(), par_star.labels);
    }
  }
  for (const char* aux : {"manifest.json", "split.txt"}) {
    fs::path src = fs::path(in_root) / aux;
    if (fs::exists(src)) fs::copy_file(src, fs::path(out_root) / aux,
                                       fs::copy_options::overwrite_existing);
  }
  std::cout << "intersected " << index.entries.size() << " sequences into " << out_root << "\n";
  return 0;
}

std::vector<int> parse_frame_list(const std::string& s) {
  std::vector<int> out;
  size_t pos = 0;
  while (pos < s.size()) {
    size_t comma = s.find(',', pos);
    out.push_back(std::stoi(s.substr(pos, comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw UsageError("empty frame list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-granularity gait recognition toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // shared options
  std::string config_path, data_root, out_dir;
  std::vector<std::string> overrides;
  uint64_t seed = 0;
  bool seed_set = false;

  auto add_config_opts = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config JSON");
    cmd->add_option("--set", overrides, "override config keys, e.g. --set schedule.total_iters=200");
    cmd->add_option("--data", data_root, "dataset root (shorthand for --set data.root=...)");
    cmd->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
      seed_set = true;
    });
  };

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "render a synthetic walker dataset");
  int g_subjects = 20, g_seqs = 4, g_frames = 40;
  double g_noise = 0.0;
  uint64_t g_seed = 0;
  bool g_no_cloth = false;
  gen->add_option("--subjects", g_subjects, "number of subjects");
  gen->add_option("--seqs", g_seqs, "sequences per subject");
  gen->add_option("--frames", g_frames, "frames per sequence");
  gen->add_option("--noise", g_noise, "parsing degradation in [0,1]");
  gen->add_option("--seed", g_seed, "master seed");
  gen->add_flag("--no-cloth-change", g_no_cloth, "disable outfit swaps");
  gen->add_option("--out", out_dir, "output root")->required();

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  std::string resume;
  bool allow_mismatch = false;
  add_config_opts(tr);
  tr->add_option("--out", out_dir, "run directory")->required();
  tr->add_option("--resume", resume, "resume from checkpoint");
  tr->add_flag("--allow-fingerprint-mismatch", allow_mismatch,
               "accept checkpoints from a different config");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "run the retrieval protocol");
  EvaluateOptions eopt;
  add_config_opts(ev);
  ev->add_option("--checkpoint", eopt.checkpoint, "trained checkpoint");
  ev->add_option("--checkpoint-sil", eopt.checkpoint_sil, "sil-only checkpoint (distance fusion)");
  ev->add_option("--checkpoint-par", eopt.checkpoint_par, "par-only checkpoint (distance fusion)");
  ev->add_option("--mode", eopt.mode,
                 "xgait | sil-only | par-only | feature-fusion | distance-fusion");
  ev->add_option("--protocol", eopt.protocol, "gait3d | ccpg-full | ccpg-up | ccpg-dn");
  ev->add_option("--dump-embeddings", eopt.dump_embeddings_base, "dump embeddings to BASE_{query,gallery}.bin");
  ev->add_option("--out", out_dir, "report directory")->required();
  ev->add_flag("--allow-fingerprint-mismatch", eopt.allow_fingerprint_mismatch,
               "accept checkpoints from a different config");

  // ablate
  auto* ab = app.add_subcommand("ablate", "train and evaluate the ablation grids");
  add_config_opts(ab);
  ab->add_option("--out", out_dir, "grid directory")->required();

  // intersect
  auto* in = app.add_subcommand("intersect", "derive the common-support Sil*/Par* dataset");
  std::string in_root;
  in->add_option("--in", in_root, "source dataset root")->required();
  in->add_option("--out", out_dir, "destination root")->required();

  // heatmap
  auto* hm = app.add_subcommand("heatmap", "emit per-frame channel-energy heatmaps");
  std::string sequence, frames_arg = "0";
  std::string hm_checkpoint;
  add_config_opts(hm);
  hm->add_option("--checkpoint", hm_checkpoint, "trained checkpoint")->required();
  hm->add_option("--sequence", sequence, "subject/seq, e.g. 0003/s01")->required();
  hm->add_option("--frames", frames_arg, "comma-separated frame indices");
  hm->add_option("--out", out_dir, "output directory")->required();
  bool hm_allow_mismatch = false;
  hm->add_flag("--allow-fingerprint-mismatch", hm_allow_mismatch, "");

  // metrics
  auto* me = app.add_subcommand("metrics", "recompute metrics from embedding dumps");
  std::string query_bin, gallery_bin, me_protocol = "gait3d";
  me->add_option("--query", query_bin, "query embedding dump (.bin)")->required();
  me->add_option("--gallery", gallery_bin, "gallery embedding dump (.bin)")->required();
  me->add_option("--protocol", me_protocol, "protocol tag for the report");
  me->add_option("--out", out_dir, "report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed())
      return cmd_generate(g_subjects, g_seqs, g_frames, g_noise, g_seed, out_dir, g_no_cloth);

    if (in->parsed()) return cmd_intersect(in_root, out_dir);

    if (tr->parsed()) {
      ExperimentConfig cfg = resolve_config(config_path, overrides, data_root, seed, seed_set);
      TrainOptions topt;
      topt.out_dir = out_dir;
      topt.resume_from = resume;
      topt.allow_fingerprint_mismatch = allow_mismatch;
      TrainResult res = train(cfg, topt);
      std::cout << "trained " << res.iterations << " iterations, final loss "
                << res.final_total_loss << "\ncheckpoint: " << res.final_checkpoint
                << "\nlog: " << res.metrics_csv << "\n";
      return 0;
    }

    if (ev->parsed()) {
      ExperimentConfig cfg = resolve_config(config_path, overrides, data_root, seed, seed_set);
      fs::create_directories(out_dir);
      EvalReport r = run_protocol(cfg, eopt);
      save_report_csv(r, (fs::path(out_dir) / "report.csv").string());
      std::ofstream table((fs::path(out_dir) / "report.txt").string(), std::ios::binary);
      table << report_table(r);
      std::cout << report_table(r);
      return 0;
    }

    if (ab->parsed()) {
      ExperimentConfig cfg = resolve_config(config_path, overrides, data_root, seed, seed_set);
      auto rows = run_ablation_grid(cfg, out_dir);
      std::cout << "section,name,fingerprint,rank1,mAP\n";
      for (const auto& r : rows)
        std::cout << r.section << "," << r.name << "," << r.fingerprint << ","
                  << 100.0 * r.report.rank1 << "," << 100.0 * r.report.mAP << "\n";
      std::cout << "full table: " << (fs::path(out_dir) / "ablation.csv").string() << "\n";
      return 0;
    }

    if (hm->parsed()) {
      ExperimentConfig cfg = resolve_config(config_path, overrides, data_root, seed, seed_set);
      auto slash = sequence.find('/');
      if (slash == std::string::npos) throw UsageError("--sequence must be subject/seq");
      DatasetIndex index = index_dataset(cfg.data.root);
      const SequenceEntry& entry =
          index.find(sequence.substr(0, slash), sequence.substr(slash + 1));
      LoadedSequence seq = load_sequence(entry);

      std::string split_path = cfg.data.split.empty()
                                   ? (fs::path(cfg.data.root) / "split.txt").string()
                                   : cfg.data.split;
      int n_classes = filter_index(index, load_split(split_path).train).num_subjects();
      auto model = load_model(cfg, n_classes, hm_checkpoint, hm_allow_mismatch);
      emit_heatmaps(*model, model->config(), seq, parse_frame_list(frames_arg), out_dir);
      std::cout << "heatmaps written to " << out_dir << "\n";
      return 0;
    }

    if (me->parsed()) {
      fs::create_directories(out_dir);
      EvalReport r = metrics_from_dumps(query_bin, gallery_bin, me_protocol);
      save_report_csv(r, (fs::path(out_dir) / "report.csv").string());
      std::cout << report_table(r);
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
