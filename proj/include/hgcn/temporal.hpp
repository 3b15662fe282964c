#pragma once

#include <array>
#include <vector>

#include "hgcn/norm.hpp"
#include "hgcn/rng.hpp"
#include "hgcn/tensor.hpp"

namespace hgcn {

inline int strided_len(int t, int stride) { return (t + stride - 1) / stride; }

// Per-joint temporal convolution. Kernel layout: (c_out, tap*C_in + c_in),
// symmetric zero padding of (k-1)*dilation/2 keeps length before striding.
Act temporal_conv(const Act& u, const Mat& kern, int ksize, int dilation, int stride);
// Adjoint; accumulates the kernel gradient and returns the input gradient.
Act temporal_conv_backward(const Act& dy, const Act& u, const Mat& kern, Mat& d_kern,
                           int ksize, int dilation, int stride);

// Temporal max pooling with zero padding; argmax stores the chosen input
// frame per output element, -1 when a pad won. The pool gap margin reports
// max minus runner-up for strictly separated windows.
Act temporal_maxpool(const Act& u, int window, int stride, std::vector<int>& argmax,
                     MarginStats* margins, uint64_t* decision_hash = nullptr);
Act temporal_maxpool_backward(const Act& dy, const Act& u, int window, int stride,
                              const std::vector<int>& argmax);

Act temporal_subsample(const Act& u, int stride);
Act temporal_subsample_backward(const Act& dy, int t_in, int stride);

// Multi-scale temporal convolution: four branches at C_out/4 channels each
// (conv k5 d1, conv k5 d2, max-pool w3, identity), each entered through a
// 1x1 reduction and closed by batch norm, concatenated along channels.
struct MsTcLayer {
  int c_in = 0, c_out = 0, stride = 1;
  int c_b = 0;  // c_out / 4
  bool linear_mode = false;

  std::array<Learnable<Mat>, 4> reduce;  // c_in x c_b
  Learnable<Mat> kern_d1;                // c_b x 5*c_b
  Learnable<Mat> kern_d2;
  std::array<BatchNorm, 4> bn;

  // caches
  Act x_in;
  std::array<Act, 4> u;  // post-reduction inputs to the temporal ops
  std::vector<int> pool_arg;

  void init(int in_channels, int out_channels, int time_stride, bool linear, Rng& rng);
  void zero_grad();

  Act forward(const Act& x, const FwdCtx& ctx);
  Act backward(const Act& dy);
};

}  // namespace hgcn
