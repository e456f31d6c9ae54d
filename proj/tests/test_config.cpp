#include <doctest.h>

#include "xgait/config.hpp"

using namespace xgait;
using nlohmann::json;

TEST_CASE("default presets validate and expose the documented shapes") {
  ExperimentConfig tiny = default_config("tiny");
  tiny.validate();
  CHECK(tiny.model.embedding_dim == 64);
  CHECK(tiny.model.hpm_scales == std::vector<int>{1, 2, 4});
  CHECK(tiny.model.reduction_ratio == 16);
  CHECK(tiny.loss.margin == 0.2);
  CHECK(tiny.loss.alpha == 1.0);
  CHECK(tiny.loss.beta == 1.0);
  CHECK(tiny.schedule.base_lr == 0.1);
  CHECK(tiny.schedule.weight_decay == 5e-4);

  ExperimentConfig paper = default_config("paper-shape");
  paper.validate();
  CHECK(paper.model.embedding_dim == 256);
  CHECK(paper.model.hpm_scales == std::vector<int>{1, 2, 4, 8, 16});
  CHECK(paper.batch.subjects == 32);
  CHECK(paper.batch.seqs_per_subject == 2);
  CHECK(paper.batch.frames == 30);
  CHECK(paper.schedule.total_iters == 1200000);
  CHECK(paper.schedule.milestones == std::vector<long>{400000, 800000, 1000000});

  CHECK_THROWS_AS(default_config("huge"), UsageError);
}

TEST_CASE("unknown keys are rejected at every level") {
  CHECK_THROWS_AS(parse_config(json::parse(R"({"sede": 1})")), UsageError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"loss": {"margin": 0.2, "gamma": 1}})")),
                  UsageError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"model": {"encoder": {"stem": 16}}})")),
                  UsageError);
}

TEST_CASE("file values win over preset defaults") {
  ExperimentConfig cfg = parse_config(json::parse(
      R"({"preset": "tiny", "loss": {"margin": 0.5}, "schedule": {"total_iters": 100}})"));
  CHECK(cfg.loss.margin == 0.5);
  CHECK(cfg.schedule.total_iters == 100);
  CHECK(cfg.model.embedding_dim == 64);  // untouched default
}

TEST_CASE("validation catches bad values") {
  json j = json::parse(R"({"loss": {"margin": -0.1}})");
  CHECK_THROWS_AS(parse_config(j), UsageError);
  j = json::parse(R"({"schedule": {"total_iters": 100, "milestones": [50, 120]}})");
  CHECK_THROWS_AS(parse_config(j), UsageError);
  j = json::parse(R"({"schedule": {"total_iters": 100, "milestones": [50, 50]}})");
  CHECK_THROWS_AS(parse_config(j), UsageError);
  j = json::parse(R"({"ablation": {"division": "soft"}})");
  CHECK_THROWS_AS(parse_config(j), UsageError);
  j = json::parse(R"({"ablation": {"fusion_mode": "late"}})");
  CHECK_THROWS_AS(parse_config(j), UsageError);
  j = json::parse(R"({"ablation": {"share_backbone": true}})");
  CHECK_THROWS_AS(parse_config(j), UsageError);  // needs parsing_input=index
  j = json::parse(R"({"ablation": {"share_backbone": true}, "model": {"parsing_input": "index"}})");
  CHECK_NOTHROW(parse_config(j));
}

TEST_CASE("derived milestones follow the 1/3, 2/3, 5/6 fractions") {
  ExperimentConfig cfg = default_config("tiny");
  cfg.schedule.total_iters = 3000;
  cfg.schedule.milestones.clear();
  CHECK(cfg.schedule.resolved_milestones() == std::vector<long>{1000, 2000, 2500});

  // learning rate decays exactly at the milestones
  CHECK(cfg.schedule.lr_at(999) == 0.1);
  CHECK(std::abs(cfg.schedule.lr_at(1000) - 0.01) < 1e-15);
  CHECK(std::abs(cfg.schedule.lr_at(2499) - 0.001) < 1e-15);
  CHECK(std::abs(cfg.schedule.lr_at(2500) - 0.0001) < 1e-15);
}

TEST_CASE("fingerprints are stable and sensitive") {
  ExperimentConfig a = default_config("tiny");
  ExperimentConfig b = default_config("tiny");
  CHECK(config_fingerprint(a) == config_fingerprint(b));
  CHECK(config_fingerprint(a).size() == 16);
  b.loss.margin = 0.25;
  CHECK(config_fingerprint(a) != config_fingerprint(b));
}

TEST_CASE("config json round-trips") {
  ExperimentConfig a = default_config("tiny");
  a.seed = 99;
  a.data.root = "/tmp/data";
  a.ablation.fusion_mode = "feature-fusion";
  ExperimentConfig b = parse_config(config_to_json(a));
  CHECK(config_fingerprint(a) == config_fingerprint(b));
}

TEST_CASE("overrides reach nested keys and parse JSON literals") {
  json j = json::object();
  apply_override(j, "schedule.total_iters=250");
  apply_override(j, "model.hpm_scales=[1,2]");
  apply_override(j, "ablation.fusion_mode=sil-only");
  apply_override(j, "data.root=/tmp/xyz");
  ExperimentConfig cfg = parse_config(j);
  CHECK(cfg.schedule.total_iters == 250);
  CHECK(cfg.model.hpm_scales == std::vector<int>{1, 2});
  CHECK(cfg.ablation.fusion_mode == "sil-only");
  CHECK(cfg.data.root == "/tmp/xyz");
  CHECK_THROWS_AS(apply_override(j, "no-equals-sign"), UsageError);
}

TEST_CASE("model config wiring follows the ablation switches") {
  ExperimentConfig cfg = default_config("tiny");
  nn::ModelConfig mc = model_config(cfg, 10);
  CHECK(mc.branch == nn::BranchMode::kBoth);
  CHECK(mc.use_gcm());
  CHECK(mc.use_pcm());
  CHECK(mc.n_classes == 10);
  CHECK(mc.parsing_channels() == 12);

  cfg.ablation.fusion_mode = "feature-fusion";
  mc = model_config(cfg, 10);
  CHECK_FALSE(mc.use_gcm());
  CHECK_FALSE(mc.use_pcm());

  cfg.ablation.fusion_mode = "sil-only";
  mc = model_config(cfg, 10);
  CHECK(mc.branch == nn::BranchMode::kSilOnly);

  cfg.ablation.fusion_mode = "xgait";
  cfg.ablation.division = "fixed";
  mc = model_config(cfg, 10);
  CHECK(mc.division == nn::DivisionMode::kFixed);
}
