#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hgcn/mshgc.hpp"
#include "hgcn/norm.hpp"
#include "hgcn/skeleton.hpp"
#include "hgcn/temporal.hpp"

namespace hgcn {

constexpr int kStages = 3;

struct ModelConfig {
  int num_classes = 60;
  std::string layout = "ntu25";
  int v_h = 3;
  int t_in = 64;
  std::array<int, kStages> channels = {128, 256, 256};
  std::array<int, kStages> strides = {1, 2, 2};
  int layers_per_stage = 3;
  std::array<int, kBranches> k_scales = {2, 3, 4, 5, 6, 7, 8, 9};
  real label_smoothing = 0.1;
  bool linear_mode = false;

  void validate() const;
  int total_layers() const { return kStages * layers_per_stage; }
};

// A 5-joint, short-clip configuration small enough for exhaustive finite
// difference checks and quick overfit runs.
ModelConfig tiny_config();

// 3 -> C pointwise map, learnable per-joint position embedding, batch norm, ReLU.
struct EmbeddingLayer {
  Learnable<Mat> w;    // 3 x C
  Learnable<Vec> b;    // C
  Learnable<Mat> pos;  // C x V
  BatchNorm bn;
  bool linear_mode = false;

  Act x_in;
  std::vector<char> relu_mask;

  void init(int channels, int joints, bool linear, Rng& rng);
  void zero_grad();
  Act forward(const Act& x, const FwdCtx& ctx);
  void backward(const Act& dy);  // input gradient is not needed
};

// One spatial-temporal layer: MS-HGC -> ReLU -> MS-TC -> +residual -> ReLU.
struct StLayer {
  MshgcLayer hgc;
  MsTcLayer tc;
  bool projected_residual = false;
  Learnable<Mat> res_w;  // c_in x c_out when projected
  int stride = 1;

  Act x_in;
  std::vector<char> mask_mid, mask_out;

  void init(int c_in, int c_out, int joints, int v_h, const std::array<int, kBranches>& scales,
            const Mat& physical, int time_stride, bool linear, Rng& rng);
  void zero_grad();
  Act forward(const Act& x, const FwdCtx& ctx);
  Act backward(const Act& dy);
};

// A stage of layers with additive dense connections:
// y1 = g1(x), y2 = g2(y1), y3 = g3(y1 + y2), out = y1 + y2 + y3.
struct Stage {
  std::vector<StLayer> layers;
  std::vector<Act> outputs;  // y_i, cached for the dense wiring

  Act forward(const Act& x, FwdCtx& ctx, int first_layer_index);
  Act backward(const Act& dy);
};

struct Batch {
  Act x;                          // streams x 3 x T x V
  std::vector<int> stream_sample; // stream -> sample index
  std::vector<int> persons;       // per sample
  std::vector<int> labels;        // per sample
  int num_samples = 0;
};

Batch assemble_batch(const std::vector<const SkeletonSequence*>& seqs,
                     const SkeletonLayout& layout, Modality modality, int t_in);

struct HyperGcnModel {
  ModelConfig cfg;
  SkeletonLayout layout;
  Mat a_hat;  // normalized physical adjacency, V x V

  EmbeddingLayer embedding;
  std::array<Stage, kStages> stages;
  Learnable<Mat> fc_w;  // C_final x num_classes
  Learnable<Vec> fc_b;

  // forward bookkeeping for the classifier backward
  Mat pooled;  // streams x C_final
  std::vector<int> stream_sample_, persons_;
  int final_T = 0, final_V = 0;

  explicit HyperGcnModel(const ModelConfig& config, uint64_t init_seed = 1);

  int final_channels() const {
    return cfg.layers_per_stage > 0 ? cfg.channels[kStages - 1] : cfg.channels[0];
  }

  // Per-sample logits (num_samples x num_classes); person streams averaged.
  Mat forward(const Batch& batch, FwdCtx& ctx);
  void backward(const Mat& d_logits);

  void visit(const std::function<void(const ParamRef&)>& fn);
  void zero_grad();
};

// Label-smoothed cross entropy, averaged over rows. d_logits is resized and
// filled with the gradient.
real smoothed_cross_entropy(const Mat& logits, const std::vector<int>& labels,
                            real smoothing, Mat* d_logits);

// Pairwise cosine similarities of hyper-joint columns, ReLU-rectified, with
// an exactly zero diagonal.
Mat cosine_matrix(const Mat& f_h, bool linear_mode = false);

// Mean over layers of sum c_ij / (V_h - 1)^2; zero when V_h < 2.
real divergence_loss(const HyperGcnModel& model, uint64_t* decision_hash = nullptr);
// Accumulates d(divergence)/d(hyper_joints) into the model's gradients.
void divergence_backward(HyperGcnModel& model);

long long count_params(HyperGcnModel& model);

// Analytic forward cost in FLOPs (multiply-accumulates x 2) for one stream.
long long estimate_flops(const ModelConfig& cfg, int t_in, int joints);

// Checkpoint: magic "HGCN", u32 version, u32 entry count, then
// length-prefixed (name, shape, float32 data) entries in sorted name order.
void save_checkpoint(HyperGcnModel& model, const std::string& path);
std::unique_ptr<HyperGcnModel> load_checkpoint(const std::string& path);

}  // namespace hgcn
