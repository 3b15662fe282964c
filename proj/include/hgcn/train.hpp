#pragma once

#include <map>
#include <string>
#include <vector>

#include "hgcn/network.hpp"
#include "hgcn/rng.hpp"

namespace hgcn {

struct OptimConfig {
  real momentum = 0.9;
  real weight_decay = 0.0004;
  real base_lr = 0.05;
  int warmup_epochs = 5;
  std::vector<int> step_epochs = {110, 120};
  std::vector<real> step_factors = {0.1, 0.1};
  int total_epochs = 140;
  int batch_size = 64;

  void validate() const;
};

// Linear warmup to base_lr over the first warmup_epochs, then piecewise
// constant with multiplicative drops at the step epochs.
real lr_at(int epoch, const OptimConfig& cfg);

struct TrainState {
  std::vector<std::vector<real>> momentum;  // aligned with model visit order
  int epoch = 0;
  long long global_step = 0;
  uint64_t seed = 0;
  real best_val_acc = 0;
  Rng rng{0};

  void init(HyperGcnModel& model, uint64_t run_seed);
};

// Nesterov update: g = grad + wd*param; m = mu*m + g; param -= lr*(g + mu*m).
// Weight decay is skipped for norm affine, alpha and hyper-joint parameters
// (their ParamRef carries decay = false).
void sgd_step(HyperGcnModel& model, TrainState& state, real lr, const OptimConfig& cfg);

struct Dataset {
  std::vector<SkeletonSequence> seqs;
  std::vector<int> train_idx, val_idx;
};

Dataset load_dataset(const std::string& manifest_path, const std::string& root);

struct EpochMetrics {
  real mean_loss = 0;
  real accuracy = 0;
};

EpochMetrics train_epoch(HyperGcnModel& model, const Dataset& data, TrainState& state,
                         const OptimConfig& cfg, Modality modality);

real evaluate(HyperGcnModel& model, const Dataset& data, const std::vector<int>& indices,
              Modality modality, int batch_size);

// Per-sample logits plus labels, for score dumps and ensembling.
void collect_scores(HyperGcnModel& model, const Dataset& data, const std::vector<int>& indices,
                    Modality modality, int batch_size, Mat& logits, std::vector<int>& labels);

// Softmax each stream, weighted sum, argmax (ties to the lowest class).
real ensemble_scores(const std::vector<Mat>& streams, const std::vector<int>& labels,
                     const std::vector<real>& weights);

int argmax_row(const Mat& m, int row);

// ---- Finite-difference verification ----

struct GradcheckReport {
  bool pass = false;
  real max_rel_error = 0;
  // Error over parameters whose gradient magnitude exceeds 0.5: large enough
  // that finite-difference rounding noise is negligible and only genuine
  // disagreement or truncation remains.
  real max_rel_error_strong = 0;
  std::map<std::string, real> group_error;  // parameter group -> max relative error
  int attempts = 0;
  uint64_t seed_used = 0;
  size_t checked = 0;
  size_t skipped = 0;  // perturbation left the base smoothness cell
};

// Central differences (step 1e-5) over every parameter of a model built from
// cfg, against the analytic backward pass, on a fixed random input batch.
// Seeds whose evaluation point fails the smoothness margin check are
// rejected and retried (up to 3 attempts) before BoundaryDegeneracy is
// raised. corrupt_group flips the analytic gradient sign of one group --
// a fault-injection hook for testing the checker itself.
GradcheckReport gradcheck(const ModelConfig& cfg, real tolerance, uint64_t seed = 7,
                          const std::string& corrupt_group = "");

std::string param_group(const std::string& param_name);

}  // namespace hgcn
