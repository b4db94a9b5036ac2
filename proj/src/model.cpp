#include "stcm/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace stcm {

namespace {

void matvec(const double* m, const double* x, int rows, int cols, double* y) {
  for (int r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* row = m + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

void matvec_t_acc(const double* m, const double* x, int rows, int cols, double* y) {
  for (int r = 0; r < rows; ++r) {
    const double* row = m + static_cast<size_t>(r) * cols;
    double xv = x[r];
    for (int c = 0; c < cols; ++c) y[c] += row[c] * xv;
  }
}

void outer_acc(double* dm, const double* x, const double* y, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    double xv = x[r];
    double* row = dm + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) row[c] += xv * y[c];
  }
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double silu(double z) { return z * sigmoid(z); }
double silu_grad(double z) {
  double s = sigmoid(z);
  return s * (1.0 + z * (1.0 - s));
}

void ln_forward(const double* x, int64_t s, int d, const double* g, const double* b, double* out,
                double* mu, double* rstd) {
  for (int64_t i = 0; i < s; ++i) {
    const double* xi = x + static_cast<size_t>(i) * d;
    double m = 0.0;
    for (int c = 0; c < d; ++c) m += xi[c];
    m /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) {
      double dv = xi[c] - m;
      var += dv * dv;
    }
    var /= d;
    double r = 1.0 / std::sqrt(var + kLnEps);
    mu[i] = m;
    rstd[i] = r;
    double* oi = out + static_cast<size_t>(i) * d;
    for (int c = 0; c < d; ++c) oi[c] = (xi[c] - m) * r * g[c] + b[c];
  }
}

// Accumulates dL/dx into dx; accumulates dg, db.
void ln_backward(const double* x, const double* mu, const double* rstd, const double* g,
                 const double* dy, int64_t s, int d, double* dx, double* dg, double* db) {
  for (int64_t i = 0; i < s; ++i) {
    const double* xi = x + static_cast<size_t>(i) * d;
    const double* dyi = dy + static_cast<size_t>(i) * d;
    double r = rstd[i], m = mu[i];
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (int c = 0; c < d; ++c) {
      double xhat = (xi[c] - m) * r;
      double dxhat = dyi[c] * g[c];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
      dg[c] += dyi[c] * xhat;
      db[c] += dyi[c];
    }
    double inv_d = 1.0 / d;
    double* dxi = dx + static_cast<size_t>(i) * d;
    for (int c = 0; c < d; ++c) {
      double xhat = (xi[c] - m) * r;
      double dxhat = dyi[c] * g[c];
      dxi[c] += r * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
    }
  }
}

}  // namespace

ModelState model_shape(const ModelConfig& cfg) {
  if (cfg.d_model % cfg.heads != 0)
    throw ValidationError("model: d_model must be divisible by heads");
  if ((cfg.d_model / cfg.heads) % 2 != 0)
    throw ValidationError("model: per-head dimension must be even for RoPE");
  ModelState st;
  st.cfg = cfg;
  const size_t d = static_cast<size_t>(cfg.d_model);
  const size_t c = static_cast<size_t>(cfg.in_channels());
  const size_t r = static_cast<size_t>(cfg.mlp_hidden());

  size_t off = 0;
  auto claim = [&off](size_t n) {
    size_t at = off;
    off += n;
    return at;
  };
  st.off_patch_w = claim(d * c);
  st.off_patch_b = claim(d);
  st.off_cls = claim(d);
  st.off_mask = claim(d);

  size_t boff = 0;
  auto bclaim = [&boff](size_t n) {
    size_t at = boff;
    boff += n;
    return at;
  };
  st.b_ln1_g = bclaim(d);
  st.b_ln1_b = bclaim(d);
  st.b_wq = bclaim(d * d);
  st.b_wk = bclaim(d * d);
  st.b_wv = bclaim(d * d);
  st.b_wo = bclaim(d * d);
  st.b_ln2_g = bclaim(d);
  st.b_ln2_b = bclaim(d);
  st.b_gate = bclaim(r * d);
  st.b_up = bclaim(r * d);
  st.b_down = bclaim(d * r);
  st.block_stride = boff;
  st.off_blocks = claim(boff * static_cast<size_t>(cfg.depth));

  st.off_recon_w = claim(c * d);
  st.off_recon_b = claim(c);
  st.off_pred_w = claim(c * d);
  st.off_pred_b = claim(c);
  st.n_params = off;
  st.params.assign(off, 0.0);
  return st;
}

ModelState init_model(const ModelConfig& cfg, uint64_t seed) {
  ModelState st = model_shape(cfg);
  Rng rng(derive_seed(seed, "init"));
  const int d = cfg.d_model;
  const int c = cfg.in_channels();
  const int r = cfg.mlp_hidden();

  auto xavier = [&rng](double* w, int fan_out, int fan_in) {
    double sigma = std::sqrt(2.0 / (fan_in + fan_out));
    for (int i = 0; i < fan_out * fan_in; ++i) w[i] = sigma * rng.normal();
  };
  auto small = [&rng](double* w, int n) {
    for (int i = 0; i < n; ++i) w[i] = 0.02 * rng.normal();
  };
  auto ones = [](double* w, int n) { std::fill(w, w + n, 1.0); };

  xavier(st.p(st.off_patch_w), d, c);
  small(st.p(st.off_cls), d);
  small(st.p(st.off_mask), d);
  for (int b = 0; b < cfg.depth; ++b) {
    ones(st.p(st.block_off(b, st.b_ln1_g)), d);
    xavier(st.p(st.block_off(b, st.b_wq)), d, d);
    xavier(st.p(st.block_off(b, st.b_wk)), d, d);
    xavier(st.p(st.block_off(b, st.b_wv)), d, d);
    xavier(st.p(st.block_off(b, st.b_wo)), d, d);
    ones(st.p(st.block_off(b, st.b_ln2_g)), d);
    xavier(st.p(st.block_off(b, st.b_gate)), r, d);
    xavier(st.p(st.block_off(b, st.b_up)), r, d);
    xavier(st.p(st.block_off(b, st.b_down)), d, r);
  }
  xavier(st.p(st.off_recon_w), c, d);
  xavier(st.p(st.off_pred_w), c, d);
  return st;
}

std::vector<double> extract_patches(const AdSequence& seq, int patch_h, int patch_w) {
  if (seq.h % patch_h != 0 || seq.w % patch_w != 0)
    throw ValidationError("tokenize: frame dims not divisible by patch dims");
  int gh = seq.h / patch_h, gw = seq.w / patch_w;
  int c = 2 * patch_h * patch_w;
  std::vector<double> out(static_cast<size_t>(seq.t_frames) * gh * gw * c);
  size_t idx = 0;
  for (int t = 0; t < seq.t_frames; ++t)
    for (int hh = 0; hh < gh; ++hh)
      for (int ww = 0; ww < gw; ++ww)
        for (int ph = 0; ph < patch_h; ++ph)
          for (int pw = 0; pw < patch_w; ++pw) {
            auto v = seq.at(t, hh * patch_h + ph, ww * patch_w + pw);
            out[idx++] = v.real();
            out[idx++] = v.imag();
          }
  return out;
}

std::vector<std::complex<double>> unpatch(const std::vector<double>& patches, int t, int grid_h,
                                          int grid_w, int patch_h, int patch_w) {
  int h = grid_h * patch_h, w = grid_w * patch_w;
  std::vector<std::complex<double>> out(static_cast<size_t>(t) * h * w);
  size_t idx = 0;
  for (int tt = 0; tt < t; ++tt)
    for (int hh = 0; hh < grid_h; ++hh)
      for (int ww = 0; ww < grid_w; ++ww)
        for (int ph = 0; ph < patch_h; ++ph)
          for (int pw = 0; pw < patch_w; ++pw) {
            double re = patches[idx++];
            double im = patches[idx++];
            out[(static_cast<size_t>(tt) * h + hh * patch_h + ph) * w + ww * patch_w + pw] = {re,
                                                                                              im};
          }
  return out;
}

TokenGrid tokenize(const AdSequence& seq, const ModelState& state) {
  const ModelConfig& cfg = state.cfg;
  std::vector<double> patches = extract_patches(seq, cfg.patch_h, cfg.patch_w);
  TokenGrid grid;
  grid.t = seq.t_frames;
  grid.grid_h = seq.h / cfg.patch_h;
  grid.grid_w = seq.w / cfg.patch_w;
  grid.dim = cfg.d_model;
  grid.x.assign(static_cast<size_t>(grid.s()) * cfg.d_model, 0.0);

  std::memcpy(grid.x.data(), state.p(state.off_cls), sizeof(double) * cfg.d_model);
  const int c = cfg.in_channels();
  for (int64_t i = 0; i < grid.n_content(); ++i) {
    double* xi = grid.x.data() + static_cast<size_t>(i + 1) * cfg.d_model;
    matvec(state.p(state.off_patch_w), patches.data() + static_cast<size_t>(i) * c, cfg.d_model, c,
           xi);
    const double* b = state.p(state.off_patch_b);
    for (int k = 0; k < cfg.d_model; ++k) xi[k] += b[k];
  }
  return grid;
}

void apply_mask_embedding(TokenGrid& grid, const MaskGrid& mask, const ModelState& state) {
  if (mask.dims.t != grid.t || mask.dims.h != grid.grid_h || mask.dims.w != grid.grid_w)
    throw ValidationError("apply_mask_embedding: mask dims do not match the token layout");
  const double* me = state.p(state.off_mask);
  for (int64_t i = 0; i < grid.n_content(); ++i)
    if (mask.mask[static_cast<size_t>(i)])
      std::memcpy(grid.x.data() + static_cast<size_t>(i + 1) * grid.dim, me,
                  sizeof(double) * grid.dim);
}

namespace {

AttentionWeights block_weights(const ModelState& st, int b) {
  AttentionWeights w;
  w.dim = st.cfg.d_model;
  w.heads = st.cfg.heads;
  w.rope_base = st.cfg.rope_base;
  w.wq = st.p(st.block_off(b, st.b_wq));
  w.wk = st.p(st.block_off(b, st.b_wk));
  w.wv = st.p(st.block_off(b, st.b_wv));
  w.wo = st.p(st.block_off(b, st.b_wo));
  return w;
}

void block_forward(const ModelState& st, int b, const NeighborTable& table,
                   const RoutingConfig& rc, std::vector<double>& z, int64_t s, BlockCache* cache) {
  const int d = st.cfg.d_model;
  const int r = st.cfg.mlp_hidden();
  BlockCache local;
  BlockCache& bc = cache ? *cache : local;

  bc.z_in = z;
  bc.ln1_mu.resize(static_cast<size_t>(s));
  bc.ln1_rstd.resize(static_cast<size_t>(s));
  bc.ln1_out.resize(static_cast<size_t>(s) * d);
  ln_forward(bc.z_in.data(), s, d, st.p(st.block_off(b, st.b_ln1_g)),
             st.p(st.block_off(b, st.b_ln1_b)), bc.ln1_out.data(), bc.ln1_mu.data(),
             bc.ln1_rstd.data());

  std::vector<double> attn_out(static_cast<size_t>(s) * d);
  ssta_forward(bc.ln1_out.data(), s, table, block_weights(st, b), rc, attn_out.data(), nullptr,
               cache ? &bc.attn : nullptr);
  for (size_t i = 0; i < z.size(); ++i) z[i] += attn_out[i];

  bc.z_mid = z;
  bc.ln2_mu.resize(static_cast<size_t>(s));
  bc.ln2_rstd.resize(static_cast<size_t>(s));
  bc.ln2_out.resize(static_cast<size_t>(s) * d);
  ln_forward(bc.z_mid.data(), s, d, st.p(st.block_off(b, st.b_ln2_g)),
             st.p(st.block_off(b, st.b_ln2_b)), bc.ln2_out.data(), bc.ln2_mu.data(),
             bc.ln2_rstd.data());

  bc.gate_pre.resize(static_cast<size_t>(s) * r);
  bc.up.resize(static_cast<size_t>(s) * r);
  std::vector<double> act(static_cast<size_t>(r));
  const double* wg = st.p(st.block_off(b, st.b_gate));
  const double* wu = st.p(st.block_off(b, st.b_up));
  const double* wd = st.p(st.block_off(b, st.b_down));
  std::vector<double> mlp_out(static_cast<size_t>(d));
  for (int64_t i = 0; i < s; ++i) {
    const double* xi = bc.ln2_out.data() + static_cast<size_t>(i) * d;
    double* gp = bc.gate_pre.data() + static_cast<size_t>(i) * r;
    double* up = bc.up.data() + static_cast<size_t>(i) * r;
    matvec(wg, xi, r, d, gp);
    matvec(wu, xi, r, d, up);
    for (int k = 0; k < r; ++k) act[static_cast<size_t>(k)] = silu(gp[k]) * up[k];
    matvec(wd, act.data(), d, r, mlp_out.data());
    double* zi = z.data() + static_cast<size_t>(i) * d;
    for (int k = 0; k < d; ++k) zi[k] += mlp_out[static_cast<size_t>(k)];
  }
}

// d_z arrives as dL/d(block output) and leaves as dL/d(block input).
void block_backward(const ModelState& st, int b, const NeighborTable& table,
                    const RoutingConfig& rc, const BlockCache& bc, int64_t s,
                    std::vector<double>& d_z, double* grads) {
  const int d = st.cfg.d_model;
  const int r = st.cfg.mlp_hidden();

  double* d_wg = grads + st.block_off(b, st.b_gate);
  double* d_wu = grads + st.block_off(b, st.b_up);
  double* d_wd = grads + st.block_off(b, st.b_down);
  const double* wg = st.p(st.block_off(b, st.b_gate));
  const double* wu = st.p(st.block_off(b, st.b_up));
  const double* wd = st.p(st.block_off(b, st.b_down));

  // MLP branch
  std::vector<double> d_ln2_out(static_cast<size_t>(s) * d, 0.0);
  std::vector<double> act(static_cast<size_t>(r)), d_act(static_cast<size_t>(r));
  std::vector<double> d_gp(static_cast<size_t>(r)), d_up(static_cast<size_t>(r));
  for (int64_t i = 0; i < s; ++i) {
    const double* gp = bc.gate_pre.data() + static_cast<size_t>(i) * r;
    const double* up = bc.up.data() + static_cast<size_t>(i) * r;
    const double* dzi = d_z.data() + static_cast<size_t>(i) * d;
    for (int k = 0; k < r; ++k) act[static_cast<size_t>(k)] = silu(gp[k]) * up[k];
    outer_acc(d_wd, dzi, act.data(), d, r);
    std::fill(d_act.begin(), d_act.end(), 0.0);
    matvec_t_acc(wd, dzi, d, r, d_act.data());
    for (int k = 0; k < r; ++k) {
      d_gp[static_cast<size_t>(k)] = d_act[static_cast<size_t>(k)] * up[k] * silu_grad(gp[k]);
      d_up[static_cast<size_t>(k)] = d_act[static_cast<size_t>(k)] * silu(gp[k]);
    }
    const double* xi = bc.ln2_out.data() + static_cast<size_t>(i) * d;
    outer_acc(d_wg, d_gp.data(), xi, r, d);
    outer_acc(d_wu, d_up.data(), xi, r, d);
    double* dl = d_ln2_out.data() + static_cast<size_t>(i) * d;
    matvec_t_acc(wg, d_gp.data(), r, d, dl);
    matvec_t_acc(wu, d_up.data(), r, d, dl);
  }

  // LN2: d_z becomes dL/d(z_mid); residual passes d_z through unchanged.
  ln_backward(bc.z_mid.data(), bc.ln2_mu.data(), bc.ln2_rstd.data(),
              st.p(st.block_off(b, st.b_ln2_g)), d_ln2_out.data(), s, d, d_z.data(),
              grads + st.block_off(b, st.b_ln2_g), grads + st.block_off(b, st.b_ln2_b));

  // Attention branch
  std::vector<double> d_ln1_out(static_cast<size_t>(s) * d, 0.0);
  ssta_backward(bc.ln1_out.data(), s, table, block_weights(st, b), rc, bc.attn, d_z.data(),
                d_ln1_out.data(), grads + st.block_off(b, st.b_wq),
                grads + st.block_off(b, st.b_wk), grads + st.block_off(b, st.b_wv),
                grads + st.block_off(b, st.b_wo));

  ln_backward(bc.z_in.data(), bc.ln1_mu.data(), bc.ln1_rstd.data(),
              st.p(st.block_off(b, st.b_ln1_g)), d_ln1_out.data(), s, d, d_z.data(),
              grads + st.block_off(b, st.b_ln1_g), grads + st.block_off(b, st.b_ln1_b));
}

}  // namespace

TokenGrid backbone_forward(const TokenGrid& grid, const ModelState& state,
                           const NeighborTable& table, const RoutingConfig& routing,
                           ForwardCache* cache) {
  if (table.n_tokens() != grid.s())
    throw ValidationError("backbone_forward: table token count mismatch");
  TokenGrid out = grid;
  if (cache) cache->blocks.resize(static_cast<size_t>(state.cfg.depth));
  for (int b = 0; b < state.cfg.depth; ++b)
    block_forward(state, b, table, routing, out.x, grid.s(),
                  cache ? &cache->blocks[static_cast<size_t>(b)] : nullptr);
  return out;
}

std::vector<double> reconstruction_head(const TokenGrid& grid, const ModelState& state) {
  const int c = state.cfg.in_channels();
  const int d = state.cfg.d_model;
  std::vector<double> out(static_cast<size_t>(grid.n_content()) * c);
  for (int64_t i = 0; i < grid.n_content(); ++i) {
    matvec(state.p(state.off_recon_w), grid.x.data() + static_cast<size_t>(i + 1) * d, c, d,
           out.data() + static_cast<size_t>(i) * c);
    const double* b = state.p(state.off_recon_b);
    for (int k = 0; k < c; ++k) out[static_cast<size_t>(i) * c + k] += b[k];
  }
  return out;
}

std::vector<double> prediction_head(const TokenGrid& grid, const ModelState& state) {
  const int c = state.cfg.in_channels();
  const int d = state.cfg.d_model;
  const int64_t per_frame = static_cast<int64_t>(grid.grid_h) * grid.grid_w;
  const int64_t first = static_cast<int64_t>(grid.t - 1) * per_frame;
  std::vector<double> out(static_cast<size_t>(per_frame) * c);
  for (int64_t i = 0; i < per_frame; ++i) {
    matvec(state.p(state.off_pred_w), grid.x.data() + static_cast<size_t>(first + i + 1) * d, c, d,
           out.data() + static_cast<size_t>(i) * c);
    const double* b = state.p(state.off_pred_b);
    for (int k = 0; k < c; ++k) out[static_cast<size_t>(i) * c + k] += b[k];
  }
  return out;
}

double nmse_loss(const std::vector<double>& pred, const std::vector<double>& target, int channels,
                 const std::vector<int64_t>& mask_indices, double eps) {
  if (pred.size() != target.size()) throw ValidationError("nmse_loss: shape mismatch");
  if (mask_indices.empty()) throw ValidationError("nmse_loss: empty mask set");
  double acc = 0.0;
  for (int64_t i : mask_indices) {
    const double* p = pred.data() + static_cast<size_t>(i) * channels;
    const double* x = target.data() + static_cast<size_t>(i) * channels;
    double err = 0.0, energy = 0.0;
    for (int k = 0; k < channels; ++k) {
      double dv = x[k] - p[k];
      err += dv * dv;
      energy += x[k] * x[k];
    }
    acc += err / (energy + eps);
  }
  return acc / static_cast<double>(mask_indices.size());
}

namespace {

// Shared recon/predict pipeline. For recon the mask corrupts the input and
// selects the supervised tokens; for predict the last frame's heads regress
// the provided target frame.
double run_pipeline(const ModelState& state, const AdSequence& input,
                    const MaskGrid* mask /* recon mode when set */,
                    const std::vector<std::complex<double>>* target_frame,
                    const NeighborTable& table, const RoutingConfig& routing,
                    std::vector<double>* grads) {
  const ModelConfig& cfg = state.cfg;
  const int d = cfg.d_model;
  const int c = cfg.in_channels();

  std::vector<double> patches = extract_patches(input, cfg.patch_h, cfg.patch_w);
  TokenGrid grid = tokenize(input, state);
  std::vector<int64_t> masked;
  if (mask) {
    apply_mask_embedding(grid, *mask, state);
    for (int64_t i = 0; i < grid.n_content(); ++i)
      if (mask->mask[static_cast<size_t>(i)]) masked.push_back(i);
  }

  ForwardCache cache;
  TokenGrid z = backbone_forward(grid, state, table, routing, grads ? &cache : nullptr);

  const int64_t per_frame = static_cast<int64_t>(grid.grid_h) * grid.grid_w;
  std::vector<double> preds, targets;
  std::vector<int64_t> loss_indices;
  size_t head_w_off, head_b_off;
  int64_t token_base;  // content-token index of prediction row 0
  if (mask) {
    preds = reconstruction_head(z, state);
    targets = patches;
    loss_indices = masked;
    head_w_off = state.off_recon_w;
    head_b_off = state.off_recon_b;
    token_base = 0;
  } else {
    preds = prediction_head(z, state);
    AdSequence tf;
    tf.t_frames = 1;
    tf.h = input.h;
    tf.w = input.w;
    tf.frames = *target_frame;
    targets = extract_patches(tf, cfg.patch_h, cfg.patch_w);
    loss_indices.resize(static_cast<size_t>(per_frame));
    for (int64_t i = 0; i < per_frame; ++i) loss_indices[static_cast<size_t>(i)] = i;
    head_w_off = state.off_pred_w;
    head_b_off = state.off_pred_b;
    token_base = static_cast<int64_t>(grid.t - 1) * per_frame;
  }

  double loss = nmse_loss(preds, targets, c, loss_indices, cfg.nmse_eps);
  if (!std::isfinite(loss)) throw NumericError("non-finite loss");
  if (!grads) return loss;

  // --- backward ---
  std::vector<double> d_z(static_cast<size_t>(grid.s()) * d, 0.0);
  const double inv_m = 1.0 / static_cast<double>(loss_indices.size());
  std::vector<double> d_pred(static_cast<size_t>(c));
  for (int64_t i : loss_indices) {
    const double* p = preds.data() + static_cast<size_t>(i) * c;
    const double* x = targets.data() + static_cast<size_t>(i) * c;
    double energy = 0.0;
    for (int k = 0; k < c; ++k) energy += x[k] * x[k];
    double scale = 2.0 * inv_m / (energy + cfg.nmse_eps);
    for (int k = 0; k < c; ++k) d_pred[static_cast<size_t>(k)] = scale * (p[k] - x[k]);

    int64_t token = token_base + i;
    const double* zi = z.x.data() + static_cast<size_t>(token + 1) * d;
    outer_acc(grads->data() + head_w_off, d_pred.data(), zi, c, d);
    for (int k = 0; k < c; ++k) (*grads)[head_b_off + static_cast<size_t>(k)] += d_pred[static_cast<size_t>(k)];
    matvec_t_acc(state.p(head_w_off), d_pred.data(), c, d,
                 d_z.data() + static_cast<size_t>(token + 1) * d);
  }

  for (int b = cfg.depth - 1; b >= 0; --b)
    block_backward(state, b, table, routing, cache.blocks[static_cast<size_t>(b)], grid.s(), d_z,
                   grads->data());

  // Embedding stage
  double* d_cls = grads->data() + state.off_cls;
  for (int k = 0; k < d; ++k) d_cls[k] += d_z[static_cast<size_t>(k)];
  double* d_mask_embed = grads->data() + state.off_mask;
  double* d_patch_w = grads->data() + state.off_patch_w;
  double* d_patch_b = grads->data() + state.off_patch_b;
  size_t mi = 0;
  for (int64_t i = 0; i < grid.n_content(); ++i) {
    const double* dzi = d_z.data() + static_cast<size_t>(i + 1) * d;
    bool is_masked = mask && mi < masked.size() && masked[mi] == i;
    if (is_masked) {
      ++mi;
      for (int k = 0; k < d; ++k) d_mask_embed[k] += dzi[k];
    } else {
      outer_acc(d_patch_w, dzi, patches.data() + static_cast<size_t>(i) * c, d, c);
      for (int k = 0; k < d; ++k) d_patch_b[k] += dzi[k];
    }
  }
  return loss;
}

}  // namespace

double recon_loss_and_grads(const ModelState& state, const AdSequence& clean,
                            const MaskGrid& mask, const NeighborTable& table,
                            const RoutingConfig& routing, std::vector<double>* grads) {
  return run_pipeline(state, clean, &mask, nullptr, table, routing, grads);
}

double predict_loss_and_grads(const ModelState& state, const AdSequence& past,
                              const std::vector<std::complex<double>>& target_frame,
                              const NeighborTable& causal_table, const RoutingConfig& routing,
                              std::vector<double>* grads) {
  if (static_cast<int>(target_frame.size()) != past.h * past.w)
    throw ValidationError("predict: target frame shape mismatch");
  if (causal_table.mode != AttnMode::causal)
    throw ValidationError("predict: requires a causal neighbor table");
  return run_pipeline(state, past, nullptr, &target_frame, causal_table, routing, grads);
}

std::vector<double> predict_forward(const ModelState& state, const AdSequence& past,
                                    const NeighborTable& causal_table,
                                    const RoutingConfig& routing) {
  TokenGrid grid = tokenize(past, state);
  TokenGrid z = backbone_forward(grid, state, causal_table, routing, nullptr);
  return prediction_head(z, state);
}

}  // namespace stcm
