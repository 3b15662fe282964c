#pragma once

#include <array>
#include <vector>

#include "hgcn/ahc.hpp"
#include "hgcn/graph.hpp"
#include "hgcn/rng.hpp"
#include "hgcn/tensor.hpp"

namespace hgcn {

constexpr int kBranches = 8;

// Append broadcast hyper-joint columns to every frame of a (C,T,V) block.
Act attach_hyperjoints(const Act& f, const Mat& f_h);

// Physical propagator padded with zero rows/columns for the hyper-joints;
// they reach real joints only through the learned incidence.
Mat pad_physical(const Mat& a_hat, int v_h);

// A_pad + alpha * H_hat, elementwise.
Mat fuse_topology(const Mat& a_pad, const Mat& h_hat, real alpha);

// Multi-scale hyper-graph convolution: 8 channel-split branches, each fusing
// the padded physical topology with its own adaptively constructed
// hypergraph propagator, followed by a per-branch channel transform. A
// k-scale of 0 disables the adaptive hypergraph for that branch.
struct MshgcLayer {
  int c_in = 0, c_out = 0;
  int joints = 0;  // V (real joints)
  int v_h = 0;
  int c_bin = 0, c_bout = 0;
  std::array<int, kBranches> k_scales{};
  bool linear_mode = false;

  std::array<Learnable<Mat>, kBranches> w;      // c_bin x c_bout
  std::array<Learnable<real>, kBranches> alpha;
  std::array<AhcParams, kBranches> ahc;         // unused when k_scales[i] == 0
  Learnable<Mat> hyper_joints;                  // c_in x v_h

  Mat a_pad;  // (V+V_h)^2, fixed physical propagator

  struct BranchCache {
    Mat x_tilde;  // c_bin x T*(V+V_h)
    Mat y;        // propagated, same shape
    Mat p;        // fused propagator
    Mat h_hat;
    AhcCache ahc;
    HgNormCache hg;
  };
  std::vector<BranchCache> cache;  // batch * kBranches
  int cached_T = 0, cached_B = 0;

  void init(int in_channels, int out_channels, int joint_count, int hyper_joint_count,
            const std::array<int, kBranches>& scales, const Mat& physical, bool linear,
            Rng& rng);
  void zero_grad();

  Act forward(const Act& x, const FwdCtx& ctx);
  Act backward(const Act& dy);
};

}  // namespace hgcn
