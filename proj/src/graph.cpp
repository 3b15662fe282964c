#include "hgcn/graph.hpp"

#include <cstdio>
#include <fstream>

namespace hgcn {

AdjacencyMatrix build_skeleton_adjacency(const SkeletonLayout& layout, bool self_loops) {
  layout.validate();
  AdjacencyMatrix a;
  a.values = Mat::Zero(layout.joint_count, layout.joint_count);
  for (auto [p, c] : layout.edges) {
    a.values(p, c) = 1;
    a.values(c, p) = 1;
  }
  if (self_loops)
    for (int i = 0; i < layout.joint_count; ++i) a.values(i, i) = 1;
  return a;
}

NormalizedPropagator normalize_adjacency(const AdjacencyMatrix& a) {
  const int n = a.size();
  Vec deg = a.values.rowwise().sum();
  for (int i = 0; i < n; ++i) {
    if (deg[i] <= 0) fail_data("IsolatedVertex: row " + std::to_string(i) + " has zero degree");
  }
  Vec inv_sqrt = deg.array().rsqrt();
  NormalizedPropagator p;
  p.kind = PropagatorKind::AdjacencyNorm;
  p.values = inv_sqrt.asDiagonal() * a.values * inv_sqrt.asDiagonal();
  return p;
}

Vec vertex_degrees(const Hypergraph& hg) { return hg.incidence * hg.edge_weights; }

Vec edge_degrees(const Hypergraph& hg) { return hg.incidence.colwise().sum().transpose(); }

NormalizedPropagator normalize_hypergraph(const Hypergraph& hg, real eps) {
  HgNormCache cache;
  NormalizedPropagator p;
  p.kind = PropagatorKind::HypergraphNorm;
  p.values = hgnorm_forward(hg.incidence, hg.edge_weights, eps, cache, nullptr);
  return p;
}

Mat hgnorm_forward(const Mat& incidence, const Vec& weights, real eps, HgNormCache& cache,
                   MarginStats* margins, uint64_t* decision_hash) {
  const int n = static_cast<int>(incidence.rows());
  const int m = static_cast<int>(incidence.cols());

  auto guard_state = [eps](real d) -> uint64_t { return d > eps ? 1 : (d < -eps ? 2 : 3); };
  uint64_t fp = 1469598103934665603ULL;

  cache.dv = incidence * weights;
  cache.de = incidence.colwise().sum().transpose();
  cache.dv_inv.resize(n);
  cache.c.resize(m);
  for (int i = 0; i < n; ++i) {
    cache.dv_inv[i] = guarded_inverse(cache.dv[i], eps);
    fp = (fp ^ guard_state(cache.dv[i])) * 1099511628211ULL;
    if (margins) margins->note_vertex_degree(cache.dv[i]);
  }
  for (int e = 0; e < m; ++e) {
    cache.c[e] = weights[e] * guarded_inverse(cache.de[e], eps);
    fp = (fp ^ guard_state(cache.de[e])) * 1099511628211ULL;
  }
  fold_decision(decision_hash, fp);

  cache.s = incidence * cache.c.asDiagonal() * incidence.transpose();
  cache.h_hat = cache.dv_inv.asDiagonal() * cache.s;
  return cache.h_hat;
}

void hgnorm_backward(const Mat& d_hat, const Mat& incidence, const Vec& weights, real eps,
                     const HgNormCache& cache, Mat& d_incidence, Vec& d_weights) {
  const int n = static_cast<int>(incidence.rows());
  const int m = static_cast<int>(incidence.cols());

  // h_hat = diag(dv_inv) * S with S = H diag(c) H^T, c = w .* de_inv.
  Vec d_dvinv = (d_hat.array() * cache.s.array()).rowwise().sum().matrix();
  Mat g_s = cache.dv_inv.asDiagonal() * d_hat;

  // Through S.
  Mat gsum = g_s + g_s.transpose();
  d_incidence += gsum * incidence * cache.c.asDiagonal();
  Vec d_c = (incidence.transpose() * g_s * incidence).diagonal();

  // c = w .* de_inv.
  Vec de_inv(m), de_inv_d(m);
  for (int e = 0; e < m; ++e) {
    de_inv[e] = guarded_inverse(cache.de[e], eps);
    de_inv_d[e] = (std::abs(cache.de[e]) > eps) ? -de_inv[e] * de_inv[e] : real(0);
  }
  d_weights += (d_c.array() * de_inv.array()).matrix();
  Vec d_de = (d_c.array() * weights.array() * de_inv_d.array()).matrix();
  d_incidence.rowwise() += d_de.transpose();

  // dv_inv path: dv = H w.
  Vec dv_inv_d(n);
  for (int i = 0; i < n; ++i)
    dv_inv_d[i] =
        (std::abs(cache.dv[i]) > eps) ? -cache.dv_inv[i] * cache.dv_inv[i] : real(0);
  Vec d_dv = (d_dvinv.array() * dv_inv_d.array()).matrix();
  d_weights += incidence.transpose() * d_dv;
  d_incidence += d_dv * weights.transpose();
}

void write_matrix_csv(const Mat& m, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail_data("cannot open file for writing: " + path);
  char buf[64];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.9g", m(i, j));
      f << buf << (j + 1 < m.cols() ? "," : "");
    }
    f << "\n";
  }
  if (!f) fail_data("write failed: " + path);
}

void write_vector_csv(const Vec& v, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail_data("cannot open file for writing: " + path);
  char buf[64];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g", v[i]);
    f << buf << "\n";
  }
  if (!f) fail_data("write failed: " + path);
}

}  // namespace hgcn
