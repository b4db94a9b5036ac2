#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "stcm/adt.hpp"
#include "stcm/attention.hpp"
#include "stcm/common.hpp"
#include "stcm/masking.hpp"

namespace stcm {

struct ModelConfig {
  int d_model = 32;
  int depth = 12;
  int heads = 8;
  int mlp_ratio = 4;
  int patch_h = 1;
  int patch_w = 1;
  double nmse_eps = 1e-8;
  double rope_base = 10000.0;

  int in_channels() const { return 2 * patch_h * patch_w; }
  int mlp_hidden() const { return mlp_ratio * d_model; }
};

inline constexpr double kLnEps = 1e-5;

// All trainable parameters live in one flat vector; the offsets below define
// the layout. Gradients and optimizer moments reuse the same layout.
struct ModelState {
  ModelConfig cfg;
  std::vector<double> params;

  size_t off_patch_w = 0, off_patch_b = 0, off_cls = 0, off_mask = 0;
  size_t off_blocks = 0, block_stride = 0;
  size_t b_ln1_g = 0, b_ln1_b = 0, b_wq = 0, b_wk = 0, b_wv = 0, b_wo = 0;
  size_t b_ln2_g = 0, b_ln2_b = 0, b_gate = 0, b_up = 0, b_down = 0;
  size_t off_recon_w = 0, off_recon_b = 0, off_pred_w = 0, off_pred_b = 0;
  size_t n_params = 0;

  size_t block_off(int block, size_t field) const {
    return off_blocks + static_cast<size_t>(block) * block_stride + field;
  }
  const double* p(size_t off) const { return params.data() + off; }
  double* p(size_t off) { return params.data() + off; }
};

ModelState init_model(const ModelConfig& cfg, uint64_t seed);

// Layout-only construction (zeroed params), used for gradient buffers.
ModelState model_shape(const ModelConfig& cfg);

struct TokenGrid {
  int t = 0, grid_h = 0, grid_w = 0;
  int dim = 0;
  std::vector<double> x;  // s() * dim, CLS at row 0

  int64_t n_content() const { return static_cast<int64_t>(t) * grid_h * grid_w; }
  int64_t s() const { return n_content() + 1; }
};

// Per-token patch vectors: for each patch cell in row-major order, (re, im).
std::vector<double> extract_patches(const AdSequence& seq, int patch_h, int patch_w);

// Inverse of extract_patches back onto the angle-delay grid.
std::vector<std::complex<double>> unpatch(const std::vector<double>& patches, int t, int grid_h,
                                          int grid_w, int patch_h, int patch_w);

TokenGrid tokenize(const AdSequence& seq, const ModelState& state);

void apply_mask_embedding(TokenGrid& grid, const MaskGrid& mask, const ModelState& state);

struct BlockCache {
  std::vector<double> z_in, ln1_out, z_mid, ln2_out;
  std::vector<double> ln1_mu, ln1_rstd, ln2_mu, ln2_rstd;
  AttnScratch attn;
  std::vector<double> gate_pre, up;
};

struct ForwardCache {
  std::vector<BlockCache> blocks;
};

TokenGrid backbone_forward(const TokenGrid& grid, const ModelState& state,
                           const NeighborTable& table, const RoutingConfig& routing,
                           ForwardCache* cache = nullptr);

// Linear head over all content tokens -> patch-space predictions
// (n_content x in_channels).
std::vector<double> reconstruction_head(const TokenGrid& grid, const ModelState& state);

// Linear head over the last frame's tokens -> next-frame patches
// (grid_h*grid_w x in_channels).
std::vector<double> prediction_head(const TokenGrid& grid, const ModelState& state);

// (1/|M|) sum_{i in M} ||x_i - p_i||^2 / (||x_i||^2 + eps) over per-token
// component vectors of length `channels`.
double nmse_loss(const std::vector<double>& pred, const std::vector<double>& target, int channels,
                 const std::vector<int64_t>& mask_indices, double eps);

// Masked-reconstruction objective: forward (with corruption) + loss; when
// grads != nullptr, also exact reverse-mode gradients (accumulated into a
// zeroed buffer of n_params).
double recon_loss_and_grads(const ModelState& state, const AdSequence& clean,
                            const MaskGrid& mask, const NeighborTable& table,
                            const RoutingConfig& routing, std::vector<double>* grads);

// One-step-prediction objective over the full predicted frame.
double predict_loss_and_grads(const ModelState& state, const AdSequence& past,
                              const std::vector<std::complex<double>>& target_frame,
                              const NeighborTable& causal_table, const RoutingConfig& routing,
                              std::vector<double>* grads);

// Forward-only prediction in patch space for evaluation.
std::vector<double> predict_forward(const ModelState& state, const AdSequence& past,
                                    const NeighborTable& causal_table,
                                    const RoutingConfig& routing);

}  // namespace stcm
