#pragma once

#include <map>
#include <string>

#include "xgait/checkpoint.hpp"
#include "xgait/config.hpp"
#include "xgait/dataset.hpp"
#include "xgait/nn/model.hpp"

namespace xgait {

// SGD with momentum and decoupled-from-nothing classic weight decay:
// v = mu*v + g + wd*w;  w -= lr*v
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(nn::ParamRefs<float>& refs, double lr);
  static void zero_grad(nn::ParamRefs<float>& refs);

  std::map<std::string, std::vector<float>>& velocity() { return velocity_; }

 private:
  double momentum_;
  double weight_decay_;
  std::map<std::string, std::vector<float>> velocity_;
};

// Restricts an index to the given subjects and relabels classes densely.
DatasetIndex filter_index(const DatasetIndex& index, const std::set<std::string>& subjects);

struct TrainOptions {
  std::string out_dir;
  std::string resume_from;          // checkpoint path, empty = fresh run
  bool allow_fingerprint_mismatch = false;
};

struct TrainResult {
  long iterations = 0;
  double final_total_loss = 0.0;
  std::string final_checkpoint;
  std::string metrics_csv;
};

// Deterministic training loop: per-iteration log row, periodic + final
// checkpoints, NaN abort with a diagnostic dump.
TrainResult train(const ExperimentConfig& cfg, const TrainOptions& opt);

}  // namespace xgait
