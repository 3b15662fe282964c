#pragma once

#include <limits>
#include <string>
#include <vector>

#include "hgcn/tensor.hpp"

namespace hgcn {

// Smoothness diagnostics collected during a forward pass. The gradient
// checker rejects seeds whose evaluation point sits too close to a
// non-differentiable boundary (top-K selection, pooling argmax, degree guard).
struct MarginStats {
  real min_topk_gap = std::numeric_limits<real>::infinity();
  real min_abs_vertex_degree = std::numeric_limits<real>::infinity();
  real min_pool_gap = std::numeric_limits<real>::infinity();

  void note_topk_gap(real g) { min_topk_gap = std::min(min_topk_gap, g); }
  void note_vertex_degree(real d) {
    min_abs_vertex_degree = std::min(min_abs_vertex_degree, std::abs(d));
  }
  void note_pool_gap(real g) { min_pool_gap = std::min(min_pool_gap, g); }
};

// Per-layer, per-branch adaptive topology snapshot for the export command.
struct GraphSnapshot {
  int layer = 0;
  int branch = 0;
  Mat incidence;
  Vec edge_weights;
  Mat propagator;
};

struct GraphCapture {
  std::vector<GraphSnapshot> snapshots;
};

struct FwdCtx {
  bool training = false;
  bool update_running = true;   // ignored outside training
  MarginStats* margins = nullptr;
  GraphCapture* capture = nullptr;
  // When set, every discrete forward decision (ReLU mask, pool argmax,
  // top-K support, degree guard state) is folded into this fingerprint.
  // Two forwards with equal fingerprints lie in the same smoothness cell,
  // so a finite difference between them is valid.
  uint64_t* decision_hash = nullptr;
  int current_layer = 0;
};

inline void fold_decision(uint64_t* h, uint64_t v) {
  if (h) *h = (*h ^ v) * 1099511628211ULL;
}

inline FwdCtx train_ctx() {
  FwdCtx c;
  c.training = true;
  return c;
}
inline FwdCtx eval_ctx() { return FwdCtx{}; }

}  // namespace hgcn
