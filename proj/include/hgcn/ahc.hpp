#pragma once

#include <vector>

#include "hgcn/context.hpp"
#include "hgcn/graph.hpp"
#include "hgcn/rng.hpp"
#include "hgcn/tensor.hpp"

namespace hgcn {

constexpr real kLayerNormEps = 1e-5;

// Squared pairwise distances between embedding columns.
struct DistanceMatrix {
  Mat values;  // N x N, symmetric, zero diagonal
};

// ---- Stateless building blocks ----

// Mean over the frame axis of a (C x T*N) channel-major view.
Mat temporal_pool(ConstMatMap chans, int frames, int joints);

// Per-joint normalization over the channel axis with learnable affine.
Mat channel_layernorm(const Mat& x, const Vec& gain, const Vec& bias);

// P_emb = Phi^T x, w_emb = tanh(Psi^T x).
void embed(const Mat& x_norm, const Mat& phi, const Mat& psi, Mat& p_emb, Vec& w_emb);

DistanceMatrix pairwise_sq_distances(const Mat& p_emb);

// Row-wise softmax of exp(-distance) restricted to the K nearest entries.
// The diagonal (self distance 0) is always selected; remaining slots are the
// smallest distances with ties broken by lower index. Each row then has
// exactly K nonzeros summing to 1.
Mat topk_incidence(const DistanceMatrix& dist, int k);

// ---- Learnable module ----

struct AhcParams {
  Learnable<Mat> phi;      // C x C_h
  Learnable<Mat> psi;      // C x 1
  Learnable<Vec> ln_gain;  // C
  Learnable<Vec> ln_bias;  // C
  int k = 0;
  int c_h = 0;
  bool linear = false;  // verification switch: tanh becomes identity

  void init(int channels, int k_scale, Rng& rng);
  void zero_grad();
};

struct AhcCache {
  Mat x_bar;    // C x N pooled
  Mat x_hat;    // C x N normalized pre-affine
  Mat x_norm;   // C x N after affine
  Vec inv_std;  // N
  Mat p_emb;    // C_h x N
  Vec w_pre;    // N
  Vec w;        // N
  Mat dist;     // N x N
  std::vector<std::vector<int>> support;  // per row, selected edge indices
  Mat h_inc;    // N x N
};

// x is a (C x T*N) channel-major view of one sample's branch features.
Hypergraph ahc_forward(const AhcParams& p, ConstMatMap x, int frames, int joints,
                       AhcCache& cache, MarginStats* margins,
                       uint64_t* decision_hash = nullptr);

// Adjoint of ahc_forward. d_incidence / d_weights are gradients w.r.t. the
// produced hypergraph; dx accumulates the gradient w.r.t. the input view.
// The top-K support set is treated as fixed.
void ahc_backward(AhcParams& p, const Mat& d_incidence, const Vec& d_weights,
                  ConstMatMap x, MatMap dx, int frames, int joints, const AhcCache& cache);

// Convenience wrapper matching the construction contract: build the
// adaptive hypergraph for a single (C, T, N) feature block.
Hypergraph build_hypergraph(const AhcParams& p, ConstMatMap x, int frames, int joints);

}  // namespace hgcn
