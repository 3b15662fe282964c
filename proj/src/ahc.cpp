#include "hgcn/ahc.hpp"

#include <algorithm>
#include <cmath>

namespace hgcn {

Mat temporal_pool(ConstMatMap chans, int frames, int joints) {
  const int c = static_cast<int>(chans.rows());
  Mat out = Mat::Zero(c, joints);
  for (int t = 0; t < frames; ++t) out += chans.block(0, static_cast<Eigen::Index>(t) * joints, c, joints);
  out /= static_cast<real>(frames);
  return out;
}

Mat channel_layernorm(const Mat& x, const Vec& gain, const Vec& bias) {
  const int c = static_cast<int>(x.rows());
  const int n = static_cast<int>(x.cols());
  Mat out(c, n);
  for (int j = 0; j < n; ++j) {
    real mu = x.col(j).mean();
    real var = (x.col(j).array() - mu).square().sum() / c;
    real inv_std = real(1) / std::sqrt(var + kLayerNormEps);
    out.col(j) = gain.array() * ((x.col(j).array() - mu) * inv_std) + bias.array();
  }
  return out;
}

void embed(const Mat& x_norm, const Mat& phi, const Mat& psi, Mat& p_emb, Vec& w_emb) {
  p_emb = phi.transpose() * x_norm;
  w_emb = (psi.transpose() * x_norm).transpose();
  w_emb = w_emb.array().tanh();
}

DistanceMatrix pairwise_sq_distances(const Mat& p_emb) {
  const int n = static_cast<int>(p_emb.cols());
  DistanceMatrix d;
  d.values = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      real v = (p_emb.col(i) - p_emb.col(j)).squaredNorm();
      d.values(i, j) = v;
      d.values(j, i) = v;
    }
  return d;
}

namespace {

// Selected edge indices for one row: the diagonal first, then the K-1
// nearest others with ties broken by lower index. Reports the ranking gap
// between the last kept and first dropped distance when margins are wanted.
std::vector<int> select_row(const Mat& dist, int row, int k, MarginStats* margins) {
  const int n = static_cast<int>(dist.cols());
  std::vector<int> others;
  others.reserve(n - 1);
  for (int j = 0; j < n; ++j)
    if (j != row) others.push_back(j);
  std::sort(others.begin(), others.end(), [&](int a, int b) {
    if (dist(row, a) != dist(row, b)) return dist(row, a) < dist(row, b);
    return a < b;
  });
  std::vector<int> sel;
  sel.reserve(k);
  sel.push_back(row);
  for (int j = 0; j < k - 1; ++j) sel.push_back(others[j]);
  if (margins && k < n)
    margins->note_topk_gap(dist(row, others[k - 1]) - (k >= 2 ? dist(row, others[k - 2]) : real(0)));
  std::sort(sel.begin(), sel.end());
  return sel;
}

Mat topk_rows(const Mat& dist, int k, std::vector<std::vector<int>>* support,
              MarginStats* margins) {
  const int n = static_cast<int>(dist.rows());
  if (k < 1 || k > n) fail_data("KOutOfRange: K=" + std::to_string(k) + ", N=" + std::to_string(n));
  Mat h = Mat::Zero(n, n);
  if (support) support->assign(n, {});
  for (int i = 0; i < n; ++i) {
    std::vector<int> sel = select_row(dist, i, k, margins);
    real m_min = dist(i, sel[0]);
    for (int j : sel) m_min = std::min(m_min, dist(i, j));
    real denom = 0;
    for (int j : sel) denom += std::exp(-(dist(i, j) - m_min));
    for (int j : sel) h(i, j) = std::exp(-(dist(i, j) - m_min)) / denom;
    if (support) (*support)[i] = std::move(sel);
  }
  return h;
}

}  // namespace

Mat topk_incidence(const DistanceMatrix& dist, int k) {
  return topk_rows(dist.values, k, nullptr, nullptr);
}

void AhcParams::init(int channels, int k_scale, Rng& rng) {
  k = k_scale;
  c_h = std::max(channels / 2, 8);
  real bound = real(1) / std::sqrt(static_cast<real>(channels));
  phi.v = Mat(channels, c_h);
  for (int i = 0; i < channels; ++i)
    for (int j = 0; j < c_h; ++j) phi.v(i, j) = rng.uniform(-bound, bound);
  psi.v = Mat(channels, 1);
  for (int i = 0; i < channels; ++i) psi.v(i, 0) = rng.uniform(-bound, bound);
  ln_gain.v = Vec::Ones(channels);
  ln_bias.v = Vec::Zero(channels);
  zero_grad();
}

void AhcParams::zero_grad() {
  phi.g = Mat::Zero(phi.v.rows(), phi.v.cols());
  psi.g = Mat::Zero(psi.v.rows(), psi.v.cols());
  ln_gain.g = Vec::Zero(ln_gain.v.size());
  ln_bias.g = Vec::Zero(ln_bias.v.size());
}

Hypergraph ahc_forward(const AhcParams& p, ConstMatMap x, int frames, int joints,
                       AhcCache& cache, MarginStats* margins, uint64_t* decision_hash) {
  const int c = static_cast<int>(x.rows());

  cache.x_bar = temporal_pool(x, frames, joints);

  // Layer norm, keeping the pieces the backward pass needs.
  cache.x_hat.resize(c, joints);
  cache.inv_std.resize(joints);
  for (int j = 0; j < joints; ++j) {
    real mu = cache.x_bar.col(j).mean();
    real var = (cache.x_bar.col(j).array() - mu).square().sum() / c;
    cache.inv_std[j] = real(1) / std::sqrt(var + kLayerNormEps);
    cache.x_hat.col(j) = (cache.x_bar.col(j).array() - mu) * cache.inv_std[j];
  }
  cache.x_norm = (cache.x_hat.array().colwise() * p.ln_gain.v.array()).colwise() +
                 p.ln_bias.v.array();

  cache.p_emb = p.phi.v.transpose() * cache.x_norm;
  cache.w_pre = (p.psi.v.transpose() * cache.x_norm).transpose();
  cache.w = p.linear ? cache.w_pre : cache.w_pre.array().tanh().matrix();

  cache.dist = pairwise_sq_distances(cache.p_emb).values;
  cache.h_inc = topk_rows(cache.dist, p.k, &cache.support, margins);
  if (decision_hash) {
    uint64_t fp = 1469598103934665603ULL;
    for (const auto& sel : cache.support)
      for (int j : sel) fp = (fp ^ static_cast<uint64_t>(j + 1)) * 1099511628211ULL;
    fold_decision(decision_hash, fp);
  }

  Hypergraph hg;
  hg.incidence = cache.h_inc;
  hg.edge_weights = cache.w;
  return hg;
}

void ahc_backward(AhcParams& p, const Mat& d_incidence, const Vec& d_weights,
                  ConstMatMap x, MatMap dx, int frames, int joints, const AhcCache& cache) {
  const int c = static_cast<int>(x.rows());
  const int n = joints;

  // Softmax over the fixed support, input z = -dist.
  Mat d_dist = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    real dot = 0;
    for (int j : cache.support[i]) dot += d_incidence(i, j) * cache.h_inc(i, j);
    for (int j : cache.support[i])
      d_dist(i, j) = -cache.h_inc(i, j) * (d_incidence(i, j) - dot);
  }

  // Distances to embedding columns: d m_ij / d p_i = 2 (p_i - p_j), and both
  // orientations of the pair feed column i.
  Mat d_pemb = Mat::Zero(cache.p_emb.rows(), n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      real g = d_dist(i, j) + d_dist(j, i);
      if (g != 0) d_pemb.col(i) += 2 * g * (cache.p_emb.col(i) - cache.p_emb.col(j));
    }

  // Weights through tanh.
  Vec d_wpre = p.linear ? d_weights
                        : (d_weights.array() * (1 - cache.w.array().square())).matrix();

  // Embedding maps.
  p.phi.g += cache.x_norm * d_pemb.transpose();
  p.psi.g += cache.x_norm * d_wpre;
  Mat d_xnorm = p.phi.v * d_pemb + p.psi.v * d_wpre.transpose();

  // Layer norm affine + normalization.
  p.ln_gain.g += (d_xnorm.array() * cache.x_hat.array()).rowwise().sum().matrix();
  p.ln_bias.g += d_xnorm.rowwise().sum();
  Mat d_xbar(c, n);
  for (int j = 0; j < n; ++j) {
    Vec dxh = d_xnorm.col(j).array() * p.ln_gain.v.array();
    real m1 = dxh.mean();
    real m2 = (dxh.array() * cache.x_hat.col(j).array()).mean();
    d_xbar.col(j) =
        cache.inv_std[j] * (dxh.array() - m1 - cache.x_hat.col(j).array() * m2);
  }

  // Temporal pool: spread evenly over frames.
  d_xbar /= static_cast<real>(frames);
  for (int t = 0; t < frames; ++t)
    dx.block(0, static_cast<Eigen::Index>(t) * joints, c, joints) += d_xbar;
}

Hypergraph build_hypergraph(const AhcParams& p, ConstMatMap x, int frames, int joints) {
  AhcCache cache;
  return ahc_forward(p, x, frames, joints, cache, nullptr);
}

}  // namespace hgcn
