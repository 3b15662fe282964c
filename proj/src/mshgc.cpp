#include "hgcn/mshgc.hpp"

namespace hgcn {

Act attach_hyperjoints(const Act& f, const Mat& f_h) {
  const int v_h = static_cast<int>(f_h.cols());
  if (v_h == 0) return f;
  if (f_h.rows() != f.C) fail_data("ShapeMismatch: hyper-joint channels differ from features");
  Act out(f.B, f.C, f.T, f.V + v_h);
  for (int b = 0; b < f.B; ++b)
    for (int t = 0; t < f.T; ++t) {
      out.frame(b, t).leftCols(f.V) = f.frame(b, t);
      out.frame(b, t).rightCols(v_h) = f_h;
    }
  return out;
}

Mat pad_physical(const Mat& a_hat, int v_h) {
  const int v = static_cast<int>(a_hat.rows());
  Mat out = Mat::Zero(v + v_h, v + v_h);
  out.topLeftCorner(v, v) = a_hat;
  return out;
}

Mat fuse_topology(const Mat& a_pad, const Mat& h_hat, real alpha) {
  if (a_pad.rows() != h_hat.rows() || a_pad.cols() != h_hat.cols())
    fail_data("ShapeMismatch: fused topologies differ in shape");
  return a_pad + alpha * h_hat;
}

void MshgcLayer::init(int in_channels, int out_channels, int joint_count,
                      int hyper_joint_count, const std::array<int, kBranches>& scales,
                      const Mat& physical, bool linear, Rng& rng) {
  if (in_channels % kBranches != 0 || out_channels % kBranches != 0)
    fail_config("ChannelSplitError: channels must be divisible by " +
                std::to_string(kBranches));
  c_in = in_channels;
  c_out = out_channels;
  joints = joint_count;
  v_h = hyper_joint_count;
  c_bin = c_in / kBranches;
  c_bout = c_out / kBranches;
  k_scales = scales;
  linear_mode = linear;

  const int n = joints + v_h;
  for (int k : k_scales)
    if (k < 0 || k > n) fail_config("KOutOfRange: k=" + std::to_string(k));

  a_pad = pad_physical(physical, v_h);

  real wb = real(1) / std::sqrt(static_cast<real>(c_bin));
  for (int i = 0; i < kBranches; ++i) {
    w[i].v = Mat(c_bin, c_bout);
    for (int r = 0; r < c_bin; ++r)
      for (int c = 0; c < c_bout; ++c) w[i].v(r, c) = rng.uniform(-wb, wb);
    alpha[i].v = 0;
    if (k_scales[i] > 0) {
      ahc[i].init(c_bin, k_scales[i], rng);
      ahc[i].linear = linear_mode;
    }
  }
  hyper_joints.v = Mat(c_in, v_h);
  real hb = real(1) / std::sqrt(static_cast<real>(std::max(c_bin, 1)));
  for (int r = 0; r < c_in; ++r)
    for (int c = 0; c < v_h; ++c) hyper_joints.v(r, c) = rng.uniform(-hb, hb);
  zero_grad();
}

void MshgcLayer::zero_grad() {
  for (int i = 0; i < kBranches; ++i) {
    w[i].g = Mat::Zero(c_bin, c_bout);
    alpha[i].zero_grad();
    if (k_scales[i] > 0) ahc[i].zero_grad();
  }
  hyper_joints.g = Mat::Zero(c_in, v_h);
}

Act MshgcLayer::forward(const Act& x, const FwdCtx& ctx) {
  if (x.C != c_in) fail_data("ShapeMismatch: MS-HGC input channels");
  const int n = joints + v_h;
  const int t_len = x.T;
  cached_T = t_len;
  cached_B = x.B;
  cache.assign(static_cast<size_t>(x.B) * kBranches, {});

  Act out(x.B, c_out, t_len, joints);
  for (int b = 0; b < x.B; ++b) {
    auto xc = x.chans(b);
    for (int i = 0; i < kBranches; ++i) {
      BranchCache& bc = cache[static_cast<size_t>(b) * kBranches + i];

      bc.x_tilde.resize(c_bin, static_cast<Eigen::Index>(t_len) * n);
      for (int t = 0; t < t_len; ++t) {
        bc.x_tilde.middleCols(static_cast<Eigen::Index>(t) * n, joints) =
            xc.block(static_cast<Eigen::Index>(i) * c_bin, static_cast<Eigen::Index>(t) * joints,
                     c_bin, joints);
        if (v_h > 0)
          bc.x_tilde.middleCols(static_cast<Eigen::Index>(t) * n + joints, v_h) =
              hyper_joints.v.block(static_cast<Eigen::Index>(i) * c_bin, 0, c_bin, v_h);
      }

      if (k_scales[i] > 0) {
        ConstMatMap xt(bc.x_tilde.data(), c_bin, static_cast<Eigen::Index>(t_len) * n);
        Hypergraph hg = ahc_forward(ahc[i], xt, t_len, n, bc.ahc, ctx.margins, ctx.decision_hash);
        bc.h_hat = hgnorm_forward(hg.incidence, hg.edge_weights, kDegreeEps, bc.hg, ctx.margins,
                                  ctx.decision_hash);
        bc.p = a_pad + alpha[i].v * bc.h_hat;
        if (ctx.capture && b == 0)  // first stream of the batch
          ctx.capture->snapshots.push_back(
              {ctx.current_layer, i, hg.incidence, hg.edge_weights, bc.h_hat});
      } else {
        bc.p = a_pad;
      }

      bc.y.resize(c_bin, static_cast<Eigen::Index>(t_len) * n);
      for (int t = 0; t < t_len; ++t)
        bc.y.middleCols(static_cast<Eigen::Index>(t) * n, n).noalias() =
            bc.x_tilde.middleCols(static_cast<Eigen::Index>(t) * n, n) * bc.p.transpose();

      Mat z = w[i].v.transpose() * bc.y;
      auto oc = out.chans(b);
      for (int t = 0; t < t_len; ++t)
        oc.block(static_cast<Eigen::Index>(i) * c_bout, static_cast<Eigen::Index>(t) * joints,
                 c_bout, joints) = z.middleCols(static_cast<Eigen::Index>(t) * n, joints);
    }
  }
  return out;
}

Act MshgcLayer::backward(const Act& dy) {
  const int n = joints + v_h;
  const int t_len = cached_T;
  Act dx(cached_B, c_in, t_len, joints);

  for (int b = 0; b < cached_B; ++b) {
    auto dyc = dy.chans(b);
    auto dxc = dx.chans(b);
    for (int i = 0; i < kBranches; ++i) {
      BranchCache& bc = cache[static_cast<size_t>(b) * kBranches + i];

      Mat dz = Mat::Zero(c_bout, static_cast<Eigen::Index>(t_len) * n);
      for (int t = 0; t < t_len; ++t)
        dz.middleCols(static_cast<Eigen::Index>(t) * n, joints) =
            dyc.block(static_cast<Eigen::Index>(i) * c_bout,
                      static_cast<Eigen::Index>(t) * joints, c_bout, joints);

      w[i].g.noalias() += bc.y * dz.transpose();
      Mat d_y = w[i].v * dz;

      Mat d_xt = Mat::Zero(c_bin, static_cast<Eigen::Index>(t_len) * n);
      Mat d_p = Mat::Zero(n, n);
      for (int t = 0; t < t_len; ++t) {
        auto dyt = d_y.middleCols(static_cast<Eigen::Index>(t) * n, n);
        d_xt.middleCols(static_cast<Eigen::Index>(t) * n, n).noalias() = dyt * bc.p;
        d_p.noalias() +=
            dyt.transpose() * bc.x_tilde.middleCols(static_cast<Eigen::Index>(t) * n, n);
      }

      if (k_scales[i] > 0) {
        alpha[i].g += (d_p.array() * bc.h_hat.array()).sum();
        Mat d_hhat = alpha[i].v * d_p;
        Mat d_inc = Mat::Zero(n, n);
        Vec d_w = Vec::Zero(n);
        hgnorm_backward(d_hhat, bc.ahc.h_inc, bc.ahc.w, kDegreeEps, bc.hg, d_inc, d_w);
        ConstMatMap xt(bc.x_tilde.data(), c_bin, static_cast<Eigen::Index>(t_len) * n);
        MatMap dxt(d_xt.data(), c_bin, static_cast<Eigen::Index>(t_len) * n);
        ahc_backward(ahc[i], d_inc, d_w, xt, dxt, t_len, n, bc.ahc);
      }

      for (int t = 0; t < t_len; ++t) {
        dxc.block(static_cast<Eigen::Index>(i) * c_bin, static_cast<Eigen::Index>(t) * joints,
                  c_bin, joints) += d_xt.middleCols(static_cast<Eigen::Index>(t) * n, joints);
        if (v_h > 0)
          hyper_joints.g.block(static_cast<Eigen::Index>(i) * c_bin, 0, c_bin, v_h) +=
              d_xt.middleCols(static_cast<Eigen::Index>(t) * n + joints, v_h);
      }
    }
  }
  return dx;
}

}  // namespace hgcn
