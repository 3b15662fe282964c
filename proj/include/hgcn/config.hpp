#pragma once

#include <string>

#include "hgcn/network.hpp"
#include "hgcn/train.hpp"

namespace hgcn {

// Flat key=value run configuration. Unknown keys are rejected; path-typed
// values are checked for existence at parse time. `#` starts a comment.
struct RunConfig {
  ModelConfig model;
  OptimConfig optim;
  std::string data_root;
  std::string manifest;
  std::string modality = "joint";
  uint64_t seed = 42;
};

RunConfig parse_run_config(const std::string& path);
std::string serialize_run_config(const RunConfig& cfg);
void write_run_config(const RunConfig& cfg, const std::string& path);

// Full training driver: trains per config, writes metrics.log, final.ckpt,
// best.ckpt and summary.txt into out_dir.
struct TrainSummary {
  real final_train_loss = 0;
  real final_train_acc = 0;
  real best_val_acc = 0;
};

TrainSummary run_training(const RunConfig& cfg, const std::string& out_dir);

}  // namespace hgcn
