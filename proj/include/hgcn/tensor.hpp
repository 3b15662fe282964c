#pragma once

#include <Eigen/Dense>
#include <cassert>
#include <cstddef>
#include <vector>

#include "hgcn/common.hpp"

namespace hgcn {

using Mat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::Matrix<real, Eigen::Dynamic, 1>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;
using StridedMap = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;

// Batched activation tensor, layout (batch, channel, frame, joint) row-major.
struct Act {
  int B = 0, C = 0, T = 0, V = 0;
  std::vector<real> v;

  Act() = default;
  Act(int b, int c, int t, int n) { resize(b, c, t, n); }

  void resize(int b, int c, int t, int n) {
    B = b; C = c; T = t; V = n;
    v.assign(static_cast<size_t>(b) * c * t * n, real(0));
  }
  void zero() { std::fill(v.begin(), v.end(), real(0)); }
  size_t numel() const { return v.size(); }

  real& at(int b, int c, int t, int n) {
    return v[((static_cast<size_t>(b) * C + c) * T + t) * V + n];
  }
  real at(int b, int c, int t, int n) const {
    return v[((static_cast<size_t>(b) * C + c) * T + t) * V + n];
  }

  real* sample(int b) { return v.data() + static_cast<size_t>(b) * C * T * V; }
  const real* sample(int b) const { return v.data() + static_cast<size_t>(b) * C * T * V; }

  // (C x T*V) view of one sample; channel axis is outermost so this is contiguous.
  MatMap chans(int b) { return MatMap(sample(b), C, static_cast<Eigen::Index>(T) * V); }
  ConstMatMap chans(int b) const {
    return ConstMatMap(sample(b), C, static_cast<Eigen::Index>(T) * V);
  }

  // (C x V) view of one frame of one sample (row stride T*V).
  StridedMap frame(int b, int t) {
    return StridedMap(sample(b) + static_cast<size_t>(t) * V, C, V,
                      Eigen::OuterStride<>(static_cast<Eigen::Index>(T) * V));
  }
  ConstStridedMap frame(int b, int t) const {
    return ConstStridedMap(sample(b) + static_cast<size_t>(t) * V, C, V,
                           Eigen::OuterStride<>(static_cast<Eigen::Index>(T) * V));
  }

  bool all_finite() const {
    for (real x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

// Learnable tensor: value plus gradient accumulator of the same shape.
template <class M>
struct Learnable {
  M v;
  M g;
  void zero_grad() { g.setZero(); }
};

template <>
struct Learnable<real> {
  real v = 0;
  real g = 0;
  void zero_grad() { g = 0; }
};

// Flat handle used by the optimizer, checkpointing and gradient checking.
struct ParamRef {
  std::string name;
  real* data = nullptr;
  real* grad = nullptr;  // null for buffers (running statistics)
  size_t count = 0;
  std::vector<int> dims;
  bool decay = true;      // weight decay applies
  bool is_param = true;   // false: persistent buffer, saved but not optimized
};

}  // namespace hgcn
