#pragma once

#include <cstdint>
#include <vector>

#include "stcm/common.hpp"

namespace stcm {

enum class AttnMode { bidirectional, causal };

struct NeighborParams {
  int r_h = 1;
  int r_w = 1;
  std::vector<int> t_offsets;  // nonzero frame offsets; negative-only in causal mode
  int gamma_h = 1;
  int gamma_w = 1;
};

// CSR neighbor lists over the flattened token sequence. Content token
// (t,h,w) sits at index t*H*W + h*W + w, shifted by one when a CLS hub is
// present (CLS = index 0, connected to and from every token).
struct NeighborTable {
  int t_frames = 0, grid_h = 0, grid_w = 0;
  bool has_cls = false;
  AttnMode mode = AttnMode::bidirectional;
  NeighborParams params;
  std::vector<int64_t> row_offsets;  // size n_tokens()+1
  std::vector<int32_t> cols;         // sorted, unique per row

  int64_t n_tokens() const {
    return static_cast<int64_t>(t_frames) * grid_h * grid_w + (has_cls ? 1 : 0);
  }
  int64_t degree(int64_t i) const { return row_offsets[i + 1] - row_offsets[i]; }
  int64_t total_edges() const { return row_offsets.empty() ? 0 : row_offsets.back(); }
  // Frame index of a token; -1 for CLS.
  int frame_of(int64_t i) const {
    if (has_cls) {
      if (i == 0) return -1;
      --i;
    }
    return static_cast<int>(i / (static_cast<int64_t>(grid_h) * grid_w));
  }
};

NeighborTable build_neighbors(int t_frames, int grid_h, int grid_w, const NeighborParams& params,
                              AttnMode mode, bool include_cls);

// Full graph (every pair connected, frame-causal in causal mode); used by the
// oracle-equivalence tests and benchmarks.
NeighborTable build_full_neighbors(int t_frames, int grid_h, int grid_w, AttnMode mode,
                                   bool include_cls);

struct RoutingConfig {
  bool enabled = false;
  double fraction = 0.2;
  int k_min = 16;
  int k_max = 64;
};

// clip(floor(f * neighborhood), k_min, k_max), then capped at the
// neighborhood size.
int routed_size(int64_t neighborhood, const RoutingConfig& rc);

struct RoutedNeighbors {
  std::vector<int64_t> row_offsets;
  std::vector<int32_t> cols;  // sorted ascending per row
};

// Retains, per query, the routed_size() largest logits; ties broken by lower
// token index. logits[i] must align with table row i.
RoutedNeighbors topk_route(const std::vector<std::vector<double>>& logits,
                           const NeighborTable& table, const RoutingConfig& rc);

// Block-diagonal 2x2 rotations at frequencies base^(-2k/d). sign=-1 applies
// the transpose (inverse) rotation.
void rope_rotate(double* vec, int head_dim, double base, int64_t position, int sign = +1);

struct AttentionWeights {
  int dim = 0;
  int heads = 0;
  double rope_base = 10000.0;
  const double* wq = nullptr;  // dim x dim, row-major [out][in]
  const double* wk = nullptr;
  const double* wv = nullptr;
  const double* wo = nullptr;
};

// Edge counts are per head: all heads share the neighbor structure and the
// routing sizes, so one head's count describes them all.
struct AttnStats {
  int64_t scores_evaluated = 0;  // logits computed (full neighborhood)
  int64_t edges_attended = 0;    // edges surviving routing
  int64_t hub_edges = 0;         // attended edges touching the CLS hub
};

// Forward-pass intermediates needed for the backward pass. Retained lists
// and attention weights are stored per head; alphas[h] runs parallel to
// routed[h].cols (or to table.cols when routing is off).
struct AttnScratch {
  std::vector<double> q_rot, k_rot, v;  // S*dim each, heads packed
  std::vector<double> attn_cat;         // S*dim, pre-output-projection
  std::vector<RoutedNeighbors> routed;  // per head; empty when routing off
  std::vector<std::vector<double>> alphas;  // per head, softmax weights per edge
};

// positions == nullptr means position = token index.
void ssta_forward(const double* tokens, int64_t s, const NeighborTable& table,
                  const AttentionWeights& w, const RoutingConfig& rc, double* out,
                  AttnStats* stats = nullptr, AttnScratch* scratch = nullptr,
                  const int64_t* positions = nullptr);

// Gradient of ssta_forward. d_out is the upstream gradient; d_tokens is
// accumulated (+=), as are the weight gradients. scratch must come from the
// matching forward call.
void ssta_backward(const double* tokens, int64_t s, const NeighborTable& table,
                   const AttentionWeights& w, const RoutingConfig& rc, const AttnScratch& scratch,
                   const double* d_out, double* d_tokens, double* d_wq, double* d_wk, double* d_wv,
                   double* d_wo, const int64_t* positions = nullptr);

// Dense softmax attention with the same RoPE projections. When `table` is
// given, causality follows its frame layout (same-frame allowed, CLS hub
// always connected); otherwise `causal` masks by raw index.
void dense_attention_reference(const double* tokens, int64_t s, const AttentionWeights& w,
                               bool causal, const NeighborTable* layout, double* out,
                               AttnStats* stats = nullptr, const int64_t* positions = nullptr);

// Analytic edge counts for a table under a routing config (per head).
int64_t analytic_edges(const NeighborTable& table, const RoutingConfig& rc);

}  // namespace stcm
