#include "hgcn/norm.hpp"

#include <cmath>

namespace hgcn {

void BatchNorm::init(int channels) {
  gamma.v = Vec::Ones(channels);
  beta.v = Vec::Zero(channels);
  run_mean = Vec::Zero(channels);
  run_var = Vec::Ones(channels);
  zero_grad();
}

Act BatchNorm::forward(const Act& x, const FwdCtx& ctx) {
  const int C = x.C;
  Act y(x.B, C, x.T, x.V);
  const size_t plane = static_cast<size_t>(x.T) * x.V;

  if (!ctx.training) {
    for (int c = 0; c < C; ++c) {
      real scale = gamma.v[c] / std::sqrt(run_var[c] + kBatchNormEps);
      real shift = beta.v[c] - scale * run_mean[c];
      for (int b = 0; b < x.B; ++b) {
        const real* src = x.v.data() + (static_cast<size_t>(b) * C + c) * plane;
        real* dst = y.v.data() + (static_cast<size_t>(b) * C + c) * plane;
        for (size_t i = 0; i < plane; ++i) dst[i] = scale * src[i] + shift;
      }
    }
    return y;
  }

  cached_B = x.B;
  cached_T = x.T;
  cached_V = x.V;
  x_hat.assign(x.v.size(), 0);
  inv_std.resize(C);
  const real count = static_cast<real>(x.B) * plane;

  for (int c = 0; c < C; ++c) {
    real sum = 0, sq = 0;
    for (int b = 0; b < x.B; ++b) {
      const real* src = x.v.data() + (static_cast<size_t>(b) * C + c) * plane;
      for (size_t i = 0; i < plane; ++i) {
        sum += src[i];
        sq += src[i] * src[i];
      }
    }
    real mean = sum / count;
    real var = sq / count - mean * mean;
    if (var < 0) var = 0;  // rounding
    inv_std[c] = real(1) / std::sqrt(var + kBatchNormEps);

    if (ctx.update_running) {
      run_mean[c] = (1 - kBatchNormMomentum) * run_mean[c] + kBatchNormMomentum * mean;
      run_var[c] = (1 - kBatchNormMomentum) * run_var[c] + kBatchNormMomentum * var;
    }

    for (int b = 0; b < x.B; ++b) {
      const real* src = x.v.data() + (static_cast<size_t>(b) * C + c) * plane;
      real* xh = x_hat.data() + (static_cast<size_t>(b) * C + c) * plane;
      real* dst = y.v.data() + (static_cast<size_t>(b) * C + c) * plane;
      for (size_t i = 0; i < plane; ++i) {
        xh[i] = (src[i] - mean) * inv_std[c];
        dst[i] = gamma.v[c] * xh[i] + beta.v[c];
      }
    }
  }
  return y;
}

Act BatchNorm::backward(const Act& dy) {
  const int C = dy.C;
  Act dx(dy.B, C, dy.T, dy.V);
  const size_t plane = static_cast<size_t>(dy.T) * dy.V;
  const real count = static_cast<real>(dy.B) * plane;

  for (int c = 0; c < C; ++c) {
    real sum_dy = 0, sum_dy_xh = 0;
    for (int b = 0; b < dy.B; ++b) {
      const real* d = dy.v.data() + (static_cast<size_t>(b) * C + c) * plane;
      const real* xh = x_hat.data() + (static_cast<size_t>(b) * C + c) * plane;
      for (size_t i = 0; i < plane; ++i) {
        sum_dy += d[i];
        sum_dy_xh += d[i] * xh[i];
      }
    }
    beta.g[c] += sum_dy;
    gamma.g[c] += sum_dy_xh;

    real mean_dy = sum_dy / count;
    real mean_dy_xh = sum_dy_xh / count;
    real scale = gamma.v[c] * inv_std[c];
    for (int b = 0; b < dy.B; ++b) {
      const real* d = dy.v.data() + (static_cast<size_t>(b) * C + c) * plane;
      const real* xh = x_hat.data() + (static_cast<size_t>(b) * C + c) * plane;
      real* out = dx.v.data() + (static_cast<size_t>(b) * C + c) * plane;
      for (size_t i = 0; i < plane; ++i)
        out[i] = scale * (d[i] - mean_dy - xh[i] * mean_dy_xh);
    }
  }
  return dx;
}

}  // namespace hgcn
