#pragma once

#include <string>

#include "hgcn/context.hpp"
#include "hgcn/skeleton.hpp"
#include "hgcn/tensor.hpp"

namespace hgcn {

struct AdjacencyMatrix {
  Mat values;  // N x N, symmetric, nonnegative
  int size() const { return static_cast<int>(values.rows()); }
};

// Incidence over N vertices and M hyper-edges, with one weight per edge.
// Incidence entries are memberships in [0,1]; weights live in [-1,1] when
// produced adaptively (tanh range) and are exactly 1 for hand-built graphs.
struct Hypergraph {
  Mat incidence;     // N x M
  Vec edge_weights;  // M
  int vertex_count() const { return static_cast<int>(incidence.rows()); }
  int edge_count() const { return static_cast<int>(incidence.cols()); }
};

enum class PropagatorKind { AdjacencyNorm, HypergraphNorm };

struct NormalizedPropagator {
  Mat values;  // N x N
  PropagatorKind kind = PropagatorKind::AdjacencyNorm;
};

constexpr real kDegreeEps = 1e-6;

// Guarded reciprocal used for degree inversion: exact 1/d away from zero,
// exactly 0 inside the |d| <= eps dead zone (detached vertex or edge).
inline real guarded_inverse(real d, real eps) {
  if (d > eps) return real(1) / d;
  if (d < -eps) return real(1) / d;
  return real(0);
}

AdjacencyMatrix build_skeleton_adjacency(const SkeletonLayout& layout, bool self_loops);

// A_hat = Lambda^{-1/2} A Lambda^{-1/2}, Lambda = diag(row sums).
NormalizedPropagator normalize_adjacency(const AdjacencyMatrix& a);

// d(v) = sum_e w(e) h(v,e)
Vec vertex_degrees(const Hypergraph& hg);
// d(e) = sum_v h(v,e)
Vec edge_degrees(const Hypergraph& hg);

// H_hat = D_v^{-1} H W D_e^{-1} H^T with guarded degree inverses.
NormalizedPropagator normalize_hypergraph(const Hypergraph& hg, real eps = kDegreeEps);

// Differentiable form of the same normalization. The cache keeps the
// intermediates the adjoint needs.
struct HgNormCache {
  Vec dv, de;        // degrees
  Vec dv_inv;        // guarded 1/d(v)
  Vec c;             // w(e) * guarded 1/d(e)
  Mat s;             // H diag(c) H^T
  Mat h_hat;
};

Mat hgnorm_forward(const Mat& incidence, const Vec& weights, real eps, HgNormCache& cache,
                   MarginStats* margins = nullptr, uint64_t* decision_hash = nullptr);

// Accumulates gradients w.r.t. the incidence matrix and edge weights.
void hgnorm_backward(const Mat& d_hat, const Mat& incidence, const Vec& weights, real eps,
                     const HgNormCache& cache, Mat& d_incidence, Vec& d_weights);

// Row-major CSV with 9 significant digits.
void write_matrix_csv(const Mat& m, const std::string& path);
void write_vector_csv(const Vec& v, const std::string& path);

}  // namespace hgcn
