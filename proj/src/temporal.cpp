#include "hgcn/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hgcn {

Act temporal_conv(const Act& u, const Mat& kern, int ksize, int dilation, int stride) {
  const int pad = ((ksize - 1) * dilation) / 2;
  const int t_out = strided_len(u.T, stride);
  const int c_out = static_cast<int>(kern.rows());
  Act y(u.B, c_out, t_out, u.V);
  for (int b = 0; b < u.B; ++b)
    for (int t = 0; t < t_out; ++t) {
      auto dst = y.frame(b, t);
      for (int tap = 0; tap < ksize; ++tap) {
        int ti = t * stride - pad + tap * dilation;
        if (ti < 0 || ti >= u.T) continue;
        dst.noalias() += kern.middleCols(static_cast<Eigen::Index>(tap) * u.C, u.C) *
                         u.frame(b, ti);
      }
    }
  return y;
}

Act temporal_conv_backward(const Act& dy, const Act& u, const Mat& kern, Mat& d_kern,
                           int ksize, int dilation, int stride) {
  const int pad = ((ksize - 1) * dilation) / 2;
  Act du(u.B, u.C, u.T, u.V);
  for (int b = 0; b < u.B; ++b)
    for (int t = 0; t < dy.T; ++t) {
      auto g = dy.frame(b, t);
      for (int tap = 0; tap < ksize; ++tap) {
        int ti = t * stride - pad + tap * dilation;
        if (ti < 0 || ti >= u.T) continue;
        du.frame(b, ti).noalias() +=
            kern.middleCols(static_cast<Eigen::Index>(tap) * u.C, u.C).transpose() * g;
        d_kern.middleCols(static_cast<Eigen::Index>(tap) * u.C, u.C).noalias() +=
            g * u.frame(b, ti).transpose();
      }
    }
  return du;
}

Act temporal_maxpool(const Act& u, int window, int stride, std::vector<int>& argmax,
                     MarginStats* margins, uint64_t* decision_hash) {
  const int pad = (window - 1) / 2;
  const int t_out = strided_len(u.T, stride);
  Act y(u.B, u.C, t_out, u.V);
  argmax.assign(static_cast<size_t>(u.B) * u.C * t_out * u.V, -1);
  uint64_t fp = 1469598103934665603ULL;
  size_t idx = 0;
  for (int b = 0; b < u.B; ++b)
    for (int c = 0; c < u.C; ++c)
      for (int t = 0; t < t_out; ++t)
        for (int v = 0; v < u.V; ++v, ++idx) {
          real best = -std::numeric_limits<real>::infinity();
          real second = best;
          int arg = -1;
          for (int j = 0; j < window; ++j) {
            int ti = t * stride - pad + j;
            real val = (ti >= 0 && ti < u.T) ? u.at(b, c, ti, v) : real(0);
            if (val > best) {
              second = best;
              best = val;
              arg = (ti >= 0 && ti < u.T) ? ti : -1;
            } else if (val > second) {
              second = val;
            }
          }
          y.at(b, c, t, v) = best;
          argmax[idx] = arg;
          fp = (fp ^ static_cast<uint64_t>(arg + 2)) * 1099511628211ULL;
          // Exact ties come from clipped-zero plateaus whose gradient is zero
          // either way; only a strictly separated near-tie is degenerate.
          if (margins && best != second) margins->note_pool_gap(best - second);
        }
  fold_decision(decision_hash, fp);
  return y;
}

Act temporal_maxpool_backward(const Act& dy, const Act& u, int window, int stride,
                              const std::vector<int>& argmax) {
  (void)window;
  (void)stride;
  Act du(u.B, u.C, u.T, u.V);
  size_t idx = 0;
  for (int b = 0; b < dy.B; ++b)
    for (int c = 0; c < dy.C; ++c)
      for (int t = 0; t < dy.T; ++t)
        for (int v = 0; v < dy.V; ++v, ++idx) {
          int arg = argmax[idx];
          if (arg >= 0) du.at(b, c, arg, v) += dy.at(b, c, t, v);
        }
  return du;
}

Act temporal_subsample(const Act& u, int stride) {
  const int t_out = strided_len(u.T, stride);
  Act y(u.B, u.C, t_out, u.V);
  for (int b = 0; b < u.B; ++b)
    for (int t = 0; t < t_out; ++t) y.frame(b, t) = u.frame(b, t * stride);
  return y;
}

Act temporal_subsample_backward(const Act& dy, int t_in, int stride) {
  Act du(dy.B, dy.C, t_in, dy.V);
  for (int b = 0; b < dy.B; ++b)
    for (int t = 0; t < dy.T; ++t) du.frame(b, t * stride) = dy.frame(b, t);
  return du;
}

namespace {

void init_uniform(Mat& m, real bound, Rng& rng) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-bound, bound);
}

}  // namespace

void MsTcLayer::init(int in_channels, int out_channels, int time_stride, bool linear,
                     Rng& rng) {
  if (out_channels % 4 != 0) fail_config("MS-TC output channels must be divisible by 4");
  c_in = in_channels;
  c_out = out_channels;
  stride = time_stride;
  c_b = out_channels / 4;
  linear_mode = linear;

  real rb = real(1) / std::sqrt(static_cast<real>(c_in));
  for (auto& r : reduce) {
    r.v = Mat(c_in, c_b);
    init_uniform(r.v, rb, rng);
  }
  real kb = real(1) / std::sqrt(static_cast<real>(c_b) * 5);
  kern_d1.v = Mat(c_b, 5 * c_b);
  kern_d2.v = Mat(c_b, 5 * c_b);
  init_uniform(kern_d1.v, kb, rng);
  init_uniform(kern_d2.v, kb, rng);
  for (auto& n : bn) n.init(c_b);
  zero_grad();
}

void MsTcLayer::zero_grad() {
  for (auto& r : reduce) r.g = Mat::Zero(c_in, c_b);
  kern_d1.g = Mat::Zero(c_b, 5 * c_b);
  kern_d2.g = Mat::Zero(c_b, 5 * c_b);
  for (auto& n : bn) n.zero_grad();
}

Act MsTcLayer::forward(const Act& x, const FwdCtx& ctx) {
  x_in = x;
  const int t_out = strided_len(x.T, stride);
  Act y(x.B, c_out, t_out, x.V);

  for (int br = 0; br < 4; ++br) {
    u[br].resize(x.B, c_b, x.T, x.V);
    for (int b = 0; b < x.B; ++b)
      u[br].chans(b).noalias() = reduce[br].v.transpose() * x.chans(b);

    Act mid;
    switch (br) {
      case 0: mid = temporal_conv(u[br], kern_d1.v, 5, 1, stride); break;
      case 1: mid = temporal_conv(u[br], kern_d2.v, 5, 2, stride); break;
      case 2:
        if (linear_mode)
          mid = temporal_subsample(u[br], stride);
        else
          mid = temporal_maxpool(u[br], 3, stride, pool_arg, ctx.margins, ctx.decision_hash);
        break;
      default: mid = temporal_subsample(u[br], stride); break;
    }
    Act post = bn[br].forward(mid, ctx);

    for (int b = 0; b < x.B; ++b)
      for (int c = 0; c < c_b; ++c)
        std::copy_n(post.v.data() + (static_cast<size_t>(b) * c_b + c) * t_out * x.V,
                    static_cast<size_t>(t_out) * x.V,
                    y.v.data() +
                        (static_cast<size_t>(b) * c_out + br * c_b + c) * t_out * x.V);
  }
  return y;
}

Act MsTcLayer::backward(const Act& dy) {
  Act dx(x_in.B, c_in, x_in.T, x_in.V);

  for (int br = 0; br < 4; ++br) {
    Act d_post(dy.B, c_b, dy.T, dy.V);
    for (int b = 0; b < dy.B; ++b)
      for (int c = 0; c < c_b; ++c)
        std::copy_n(dy.v.data() +
                        (static_cast<size_t>(b) * c_out + br * c_b + c) * dy.T * dy.V,
                    static_cast<size_t>(dy.T) * dy.V,
                    d_post.v.data() + (static_cast<size_t>(b) * c_b + c) * dy.T * dy.V);

    Act d_mid = bn[br].backward(d_post);

    Act du;
    switch (br) {
      case 0: du = temporal_conv_backward(d_mid, u[br], kern_d1.v, kern_d1.g, 5, 1, stride); break;
      case 1: du = temporal_conv_backward(d_mid, u[br], kern_d2.v, kern_d2.g, 5, 2, stride); break;
      case 2:
        if (linear_mode)
          du = temporal_subsample_backward(d_mid, x_in.T, stride);
        else
          du = temporal_maxpool_backward(d_mid, u[br], 3, stride, pool_arg);
        break;
      default: du = temporal_subsample_backward(d_mid, x_in.T, stride); break;
    }

    for (int b = 0; b < x_in.B; ++b) {
      reduce[br].g.noalias() += x_in.chans(b) * du.chans(b).transpose();
      dx.chans(b).noalias() += reduce[br].v * du.chans(b);
    }
  }
  return dx;
}

}  // namespace hgcn
