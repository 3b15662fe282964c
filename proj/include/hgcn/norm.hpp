#pragma once

#include "hgcn/context.hpp"
#include "hgcn/tensor.hpp"

namespace hgcn {

constexpr real kBatchNormEps = 1e-5;
constexpr real kBatchNormMomentum = 0.1;

// Per-channel batch normalization over (batch, frame, joint).
struct BatchNorm {
  Learnable<Vec> gamma;
  Learnable<Vec> beta;
  Vec run_mean, run_var;

  // backward-pass state from the last training forward
  std::vector<real> x_hat;
  Vec inv_std;
  int cached_B = 0, cached_T = 0, cached_V = 0;

  void init(int channels);
  void zero_grad() {
    gamma.g = Vec::Zero(gamma.v.size());
    beta.g = Vec::Zero(beta.v.size());
  }

  Act forward(const Act& x, const FwdCtx& ctx);
  Act backward(const Act& dy);
};

}  // namespace hgcn
