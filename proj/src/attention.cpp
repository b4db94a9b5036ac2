#include "stcm/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace stcm {

namespace {

void validate_params(int t_frames, int grid_h, int grid_w, const NeighborParams& p,
                     AttnMode mode) {
  if (t_frames < 1 || grid_h < 1 || grid_w < 1)
    throw ValidationError("build_neighbors: grid dims must be positive");
  if (p.r_h < 0 || p.r_w < 0 || p.gamma_h < 0 || p.gamma_w < 0)
    throw ValidationError("build_neighbors: radii must be >= 0");
  for (int dt : p.t_offsets) {
    if (dt == 0 || dt <= -t_frames || dt >= t_frames)
      throw ValidationError("build_neighbors: offsets must be nonzero and within the sequence");
    if (mode == AttnMode::causal && dt > 0)
      throw ValidationError("build_neighbors: causal mode requires negative offsets");
  }
}

std::vector<int> sorted_offsets_with_zero(const std::vector<int>& offsets) {
  std::vector<int> all = offsets;
  all.push_back(0);
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

}  // namespace

NeighborTable build_neighbors(int t_frames, int grid_h, int grid_w, const NeighborParams& params,
                              AttnMode mode, bool include_cls) {
  validate_params(t_frames, grid_h, grid_w, params, mode);
  NeighborTable nt;
  nt.t_frames = t_frames;
  nt.grid_h = grid_h;
  nt.grid_w = grid_w;
  nt.has_cls = include_cls;
  nt.mode = mode;
  nt.params = params;

  const int64_t per_frame = static_cast<int64_t>(grid_h) * grid_w;
  const int64_t content = per_frame * t_frames;
  const int64_t s = content + (include_cls ? 1 : 0);
  const int base = include_cls ? 1 : 0;
  std::vector<int> all_offsets = sorted_offsets_with_zero(params.t_offsets);

  auto window = [](int center, int radius, int limit, int* lo, int* hi) {
    *lo = std::max(0, center - radius);
    *hi = std::min(limit - 1, center + radius);
  };

  nt.row_offsets.assign(static_cast<size_t>(s) + 1, 0);
  // degree pass
  for (int t = 0; t < t_frames; ++t) {
    for (int h = 0; h < grid_h; ++h) {
      for (int w = 0; w < grid_w; ++w) {
        int64_t deg = include_cls ? 1 : 0;
        for (int dt : all_offsets) {
          int tt = t + dt;
          if (tt < 0 || tt >= t_frames) continue;
          int rh = dt == 0 ? params.r_h : params.gamma_h * std::abs(dt);
          int rw = dt == 0 ? params.r_w : params.gamma_w * std::abs(dt);
          int hlo, hhi, wlo, whi;
          window(h, rh, grid_h, &hlo, &hhi);
          window(w, rw, grid_w, &wlo, &whi);
          deg += static_cast<int64_t>(hhi - hlo + 1) * (whi - wlo + 1);
        }
        int64_t row = base + (static_cast<int64_t>(t) * grid_h + h) * grid_w + w;
        nt.row_offsets[static_cast<size_t>(row) + 1] = deg;
      }
    }
  }
  if (include_cls) nt.row_offsets[1] = s;  // CLS attends to everything
  for (int64_t i = 0; i < s; ++i)
    nt.row_offsets[static_cast<size_t>(i) + 1] += nt.row_offsets[static_cast<size_t>(i)];

  nt.cols.resize(static_cast<size_t>(nt.row_offsets.back()));
  if (include_cls)
    for (int64_t j = 0; j < s; ++j) nt.cols[static_cast<size_t>(j)] = static_cast<int32_t>(j);

  for (int t = 0; t < t_frames; ++t) {
    for (int h = 0; h < grid_h; ++h) {
      for (int w = 0; w < grid_w; ++w) {
        int64_t row = base + (static_cast<int64_t>(t) * grid_h + h) * grid_w + w;
        int64_t cursor = nt.row_offsets[static_cast<size_t>(row)];
        if (include_cls) nt.cols[static_cast<size_t>(cursor++)] = 0;
        for (int dt : all_offsets) {
          int tt = t + dt;
          if (tt < 0 || tt >= t_frames) continue;
          int rh = dt == 0 ? params.r_h : params.gamma_h * std::abs(dt);
          int rw = dt == 0 ? params.r_w : params.gamma_w * std::abs(dt);
          int hlo, hhi, wlo, whi;
          window(h, rh, grid_h, &hlo, &hhi);
          window(w, rw, grid_w, &wlo, &whi);
          for (int hh = hlo; hh <= hhi; ++hh)
            for (int ww = wlo; ww <= whi; ++ww)
              nt.cols[static_cast<size_t>(cursor++)] = static_cast<int32_t>(
                  base + (static_cast<int64_t>(tt) * grid_h + hh) * grid_w + ww);
        }
      }
    }
  }
  return nt;
}

NeighborTable build_full_neighbors(int t_frames, int grid_h, int grid_w, AttnMode mode,
                                   bool include_cls) {
  NeighborTable nt;
  nt.t_frames = t_frames;
  nt.grid_h = grid_h;
  nt.grid_w = grid_w;
  nt.has_cls = include_cls;
  nt.mode = mode;

  const int64_t per_frame = static_cast<int64_t>(grid_h) * grid_w;
  const int64_t content = per_frame * t_frames;
  const int64_t s = content + (include_cls ? 1 : 0);
  const int base = include_cls ? 1 : 0;

  nt.row_offsets.assign(static_cast<size_t>(s) + 1, 0);
  for (int64_t i = 0; i < s; ++i) {
    int64_t deg;
    if (include_cls && i == 0) {
      deg = s;
    } else if (mode == AttnMode::bidirectional) {
      deg = s;
    } else {
      int frame = nt.frame_of(i);
      deg = base + static_cast<int64_t>(frame + 1) * per_frame;
    }
    nt.row_offsets[static_cast<size_t>(i) + 1] = nt.row_offsets[static_cast<size_t>(i)] + deg;
  }
  nt.cols.resize(static_cast<size_t>(nt.row_offsets.back()));
  for (int64_t i = 0; i < s; ++i) {
    int64_t cursor = nt.row_offsets[static_cast<size_t>(i)];
    int64_t deg = nt.row_offsets[static_cast<size_t>(i) + 1] - cursor;
    for (int64_t j = 0; j < deg; ++j)
      nt.cols[static_cast<size_t>(cursor + j)] = static_cast<int32_t>(j);
  }
  return nt;
}

int routed_size(int64_t neighborhood, const RoutingConfig& rc) {
  if (rc.k_min > rc.k_max) throw ValidationError("routing: k_min > k_max");
  if (!(rc.fraction > 0.0 && rc.fraction <= 1.0))
    throw ValidationError("routing: fraction must lie in (0,1]");
  int64_t k = static_cast<int64_t>(
      std::floor(rc.fraction * static_cast<double>(neighborhood) + 1e-9));
  k = std::clamp(k, static_cast<int64_t>(rc.k_min), static_cast<int64_t>(rc.k_max));
  return static_cast<int>(std::min(k, neighborhood));
}

namespace {

// Selects the k entries with the largest logits (ties: lower col wins) and
// writes their cols sorted ascending. Quickselect over plain doubles finds
// the threshold; the collection pass visits cols in ascending order, which is
// exactly the tie-break rule because rows are sorted.
void select_topk(const double* logits, const int32_t* cols, int64_t deg, int k,
                 std::vector<int32_t>* out) {
  static thread_local std::vector<double> scratch;
  scratch.assign(logits, logits + deg);
  std::nth_element(scratch.begin(), scratch.begin() + (k - 1), scratch.end(),
                   std::greater<double>());
  double thr = scratch[static_cast<size_t>(k - 1)];
  int n_above = 0;
  for (int64_t e = 0; e < deg; ++e)
    if (logits[e] > thr) ++n_above;
  int ties_needed = k - n_above;
  out->clear();
  for (int64_t e = 0; e < deg && static_cast<int>(out->size()) < k; ++e) {
    if (logits[e] > thr) {
      out->push_back(cols[e]);
    } else if (logits[e] == thr && ties_needed > 0) {
      out->push_back(cols[e]);
      --ties_needed;
    }
  }
  std::sort(out->begin(), out->end());
}

}  // namespace

RoutedNeighbors topk_route(const std::vector<std::vector<double>>& logits,
                           const NeighborTable& table, const RoutingConfig& rc) {
  const int64_t s = table.n_tokens();
  if (static_cast<int64_t>(logits.size()) != s)
    throw ValidationError("topk_route: logits rows must match the table");
  RoutedNeighbors out;
  out.row_offsets.assign(static_cast<size_t>(s) + 1, 0);
  std::vector<int32_t> keep;
  for (int64_t i = 0; i < s; ++i) {
    int64_t deg = table.degree(i);
    if (static_cast<int64_t>(logits[static_cast<size_t>(i)].size()) != deg)
      throw ValidationError("topk_route: logit count must match the neighborhood");
    int k = routed_size(deg, rc);
    select_topk(logits[static_cast<size_t>(i)].data(),
                table.cols.data() + table.row_offsets[static_cast<size_t>(i)], deg, k, &keep);
    out.row_offsets[static_cast<size_t>(i) + 1] = out.row_offsets[static_cast<size_t>(i)] + k;
    out.cols.insert(out.cols.end(), keep.begin(), keep.end());
  }
  return out;
}

void rope_rotate(double* vec, int head_dim, double base, int64_t position, int sign) {
  if (head_dim % 2 != 0) throw ValidationError("rope: head dimension must be even");
  for (int k = 0; k < head_dim / 2; ++k) {
    double omega = std::pow(base, -2.0 * k / head_dim);
    double angle = static_cast<double>(position) * omega;
    double c = std::cos(angle), sn = std::sin(angle);
    double x0 = vec[2 * k], x1 = vec[2 * k + 1];
    if (sign >= 0) {
      vec[2 * k] = c * x0 - sn * x1;
      vec[2 * k + 1] = sn * x0 + c * x1;
    } else {
      vec[2 * k] = c * x0 + sn * x1;
      vec[2 * k + 1] = -sn * x0 + c * x1;
    }
  }
}

namespace {

void matvec(const double* m, const double* x, int rows, int cols, double* y) {
  for (int r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* row = m + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

// y += M^T x  (M rows x cols, x has rows entries)
void matvec_t_acc(const double* m, const double* x, int rows, int cols, double* y) {
  for (int r = 0; r < rows; ++r) {
    const double* row = m + static_cast<size_t>(r) * cols;
    double xv = x[r];
    for (int c = 0; c < cols; ++c) y[c] += row[c] * xv;
  }
}

// dM += x (outer) y : dM[r][c] += x[r]*y[c]
void outer_acc(double* dm, const double* x, const double* y, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    double xv = x[r];
    double* row = dm + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) row[c] += xv * y[c];
  }
}

void project_and_rotate(const double* tokens, int64_t s, const AttentionWeights& w,
                        const int64_t* positions, std::vector<double>* q_rot,
                        std::vector<double>* k_rot, std::vector<double>* v) {
  const int d_model = w.dim;
  const int head_dim = d_model / w.heads;
  q_rot->assign(static_cast<size_t>(s) * d_model, 0.0);
  k_rot->assign(static_cast<size_t>(s) * d_model, 0.0);
  v->assign(static_cast<size_t>(s) * d_model, 0.0);
  for (int64_t i = 0; i < s; ++i) {
    const double* x = tokens + static_cast<size_t>(i) * d_model;
    double* qi = q_rot->data() + static_cast<size_t>(i) * d_model;
    double* ki = k_rot->data() + static_cast<size_t>(i) * d_model;
    double* vi = v->data() + static_cast<size_t>(i) * d_model;
    matvec(w.wq, x, d_model, d_model, qi);
    matvec(w.wk, x, d_model, d_model, ki);
    matvec(w.wv, x, d_model, d_model, vi);
    int64_t p = positions ? positions[i] : i;
    for (int h = 0; h < w.heads; ++h) {
      rope_rotate(qi + h * head_dim, head_dim, w.rope_base, p);
      rope_rotate(ki + h * head_dim, head_dim, w.rope_base, p);
    }
  }
}

}  // namespace

void ssta_forward(const double* tokens, int64_t s, const NeighborTable& table,
                  const AttentionWeights& w, const RoutingConfig& rc, double* out,
                  AttnStats* stats, AttnScratch* scratch, const int64_t* positions) {
  if (s != table.n_tokens()) throw ValidationError("ssta_forward: token count mismatch");
  if (w.dim % w.heads != 0) throw ValidationError("ssta_forward: dim not divisible by heads");
  const int d_model = w.dim;
  const int head_dim = d_model / w.heads;
  if (head_dim % 2 != 0) throw ValidationError("ssta_forward: per-head dim must be even");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(head_dim));

  AttnScratch local;
  AttnScratch& sc = scratch ? *scratch : local;
  project_and_rotate(tokens, s, w, positions, &sc.q_rot, &sc.k_rot, &sc.v);
  sc.attn_cat.assign(static_cast<size_t>(s) * d_model, 0.0);
  sc.routed.clear();
  if (rc.enabled) {
    sc.routed.resize(static_cast<size_t>(w.heads));
    for (auto& r : sc.routed) {
      r.row_offsets.assign(static_cast<size_t>(s) + 1, 0);
      r.cols.clear();
    }
  }
  const bool keep_alphas = scratch != nullptr;
  sc.alphas.clear();
  if (keep_alphas) {
    sc.alphas.resize(static_cast<size_t>(w.heads));
    for (auto& a : sc.alphas) a.clear();
  }

  std::vector<double> logits;  // head-major: logits[h*deg + e]
  std::vector<int32_t> keep;
  std::vector<double> kept_logits;
  std::vector<double> exps;

  for (int64_t i = 0; i < s; ++i) {
    const int64_t row_begin = table.row_offsets[static_cast<size_t>(i)];
    const int64_t deg = table.degree(i);
    const double* qi = sc.q_rot.data() + static_cast<size_t>(i) * d_model;
    logits.resize(static_cast<size_t>(w.heads) * deg);
    // one pass over the neighbor rows covers every head
    for (int64_t e = 0; e < deg; ++e) {
      int32_t j = table.cols[static_cast<size_t>(row_begin + e)];
      const double* kj = sc.k_rot.data() + static_cast<size_t>(j) * d_model;
      for (int h = 0; h < w.heads; ++h) {
        const int off = h * head_dim;
        double acc = 0.0;
        for (int c = 0; c < head_dim; ++c) acc += qi[off + c] * kj[off + c];
        logits[static_cast<size_t>(h) * deg + e] = acc * inv_sqrt_d;
      }
    }
    if (stats) stats->scores_evaluated += deg;

    for (int h = 0; h < w.heads; ++h) {
      const int off = h * head_dim;
      const double* head_logits = logits.data() + static_cast<size_t>(h) * deg;
      const int32_t* cols_kept = table.cols.data() + row_begin;
      const double* logit_kept = head_logits;
      int64_t n_kept = deg;
      if (rc.enabled) {
        int k = routed_size(deg, rc);
        if (k < deg) {
          select_topk(head_logits, table.cols.data() + row_begin, deg, k, &keep);
          // rebuild the kept logits aligned to the kept cols
          kept_logits.resize(static_cast<size_t>(k));
          int64_t e = 0;
          for (int kk = 0; kk < k; ++kk) {
            while (table.cols[static_cast<size_t>(row_begin + e)] != keep[static_cast<size_t>(kk)])
              ++e;
            kept_logits[static_cast<size_t>(kk)] = head_logits[e];
          }
          cols_kept = keep.data();
          logit_kept = kept_logits.data();
          n_kept = k;
        }
        RoutedNeighbors& r = sc.routed[static_cast<size_t>(h)];
        r.row_offsets[static_cast<size_t>(i) + 1] =
            r.row_offsets[static_cast<size_t>(i)] + n_kept;
        r.cols.insert(r.cols.end(), cols_kept, cols_kept + n_kept);
      }
      if (stats && h == 0) {
        stats->edges_attended += n_kept;
        if (table.has_cls) {
          if (i == 0) {
            stats->hub_edges += n_kept;
          } else {
            for (int64_t e = 0; e < n_kept; ++e)
              if (cols_kept[e] == 0) {
                stats->hub_edges += 1;
                break;
              }
          }
        }
      }

      double max_logit = -1e300;
      for (int64_t e = 0; e < n_kept; ++e) max_logit = std::max(max_logit, logit_kept[e]);
      exps.resize(static_cast<size_t>(n_kept));
      double z = 0.0;
      for (int64_t e = 0; e < n_kept; ++e) {
        exps[static_cast<size_t>(e)] = std::exp(logit_kept[e] - max_logit);
        z += exps[static_cast<size_t>(e)];
      }
      double* oi = sc.attn_cat.data() + static_cast<size_t>(i) * d_model + off;
      for (int64_t e = 0; e < n_kept; ++e) {
        double alpha = exps[static_cast<size_t>(e)] / z;
        const double* vj = sc.v.data() + static_cast<size_t>(cols_kept[e]) * d_model + off;
        for (int c = 0; c < head_dim; ++c) oi[c] += alpha * vj[c];
        if (keep_alphas) sc.alphas[static_cast<size_t>(h)].push_back(alpha);
      }
    }
  }

  for (int64_t i = 0; i < s; ++i)
    matvec(w.wo, sc.attn_cat.data() + static_cast<size_t>(i) * d_model, d_model, d_model,
           out + static_cast<size_t>(i) * d_model);
}

void ssta_backward(const double* tokens, int64_t s, const NeighborTable& table,
                   const AttentionWeights& w, const RoutingConfig& rc, const AttnScratch& scratch,
                   const double* d_out, double* d_tokens, double* d_wq, double* d_wk, double* d_wv,
                   double* d_wo, const int64_t* positions) {
  const int d_model = w.dim;
  const int head_dim = d_model / w.heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(head_dim));

  std::vector<double> d_cat(static_cast<size_t>(s) * d_model, 0.0);
  for (int64_t i = 0; i < s; ++i) {
    const double* g = d_out + static_cast<size_t>(i) * d_model;
    const double* cat = scratch.attn_cat.data() + static_cast<size_t>(i) * d_model;
    outer_acc(d_wo, g, cat, d_model, d_model);
    matvec_t_acc(w.wo, g, d_model, d_model, d_cat.data() + static_cast<size_t>(i) * d_model);
  }

  std::vector<double> d_q(static_cast<size_t>(s) * d_model, 0.0);
  std::vector<double> d_k(static_cast<size_t>(s) * d_model, 0.0);
  std::vector<double> d_v(static_cast<size_t>(s) * d_model, 0.0);

  std::vector<double> vg;
  for (int64_t i = 0; i < s; ++i) {
    for (int h = 0; h < w.heads; ++h) {
      const int off = h * head_dim;
      const RoutedNeighbors* routed =
          rc.enabled ? &scratch.routed[static_cast<size_t>(h)] : nullptr;
      const int32_t* cols;
      const double* alpha;
      int64_t n;
      if (routed) {
        int64_t begin = routed->row_offsets[static_cast<size_t>(i)];
        cols = routed->cols.data() + begin;
        n = routed->row_offsets[static_cast<size_t>(i) + 1] - begin;
        alpha = scratch.alphas[static_cast<size_t>(h)].data() + begin;
      } else {
        int64_t begin = table.row_offsets[static_cast<size_t>(i)];
        cols = table.cols.data() + begin;
        n = table.degree(i);
        alpha = scratch.alphas[static_cast<size_t>(h)].data() + begin;
      }
      const double* qi = scratch.q_rot.data() + static_cast<size_t>(i) * d_model + off;
      const double* g = d_cat.data() + static_cast<size_t>(i) * d_model + off;
      double weighted = 0.0;  // sum_j alpha_j (v_j . g)
      vg.resize(static_cast<size_t>(n));
      for (int64_t e = 0; e < n; ++e) {
        const double* vj = scratch.v.data() + static_cast<size_t>(cols[e]) * d_model + off;
        double acc = 0.0;
        for (int c = 0; c < head_dim; ++c) acc += vj[c] * g[c];
        vg[static_cast<size_t>(e)] = acc;
        weighted += alpha[static_cast<size_t>(e)] * acc;
      }
      double* dqi = d_q.data() + static_cast<size_t>(i) * d_model + off;
      for (int64_t e = 0; e < n; ++e) {
        double a = alpha[static_cast<size_t>(e)];
        double de = a * (vg[static_cast<size_t>(e)] - weighted) * inv_sqrt_d;
        const double* kj = scratch.k_rot.data() + static_cast<size_t>(cols[e]) * d_model + off;
        double* dvj = d_v.data() + static_cast<size_t>(cols[e]) * d_model + off;
        double* dkj = d_k.data() + static_cast<size_t>(cols[e]) * d_model + off;
        for (int c = 0; c < head_dim; ++c) {
          dvj[c] += a * g[c];
          dqi[c] += de * kj[c];
          dkj[c] += de * qi[c];
        }
      }
    }
  }

  // Un-rotate, then push through the projections.
  for (int64_t i = 0; i < s; ++i) {
    int64_t p = positions ? positions[i] : i;
    double* dqi = d_q.data() + static_cast<size_t>(i) * d_model;
    double* dki = d_k.data() + static_cast<size_t>(i) * d_model;
    for (int h = 0; h < w.heads; ++h) {
      rope_rotate(dqi + h * head_dim, head_dim, w.rope_base, p, -1);
      rope_rotate(dki + h * head_dim, head_dim, w.rope_base, p, -1);
    }
    const double* x = tokens + static_cast<size_t>(i) * d_model;
    double* dx = d_tokens + static_cast<size_t>(i) * d_model;
    outer_acc(d_wq, dqi, x, d_model, d_model);
    outer_acc(d_wk, dki, x, d_model, d_model);
    outer_acc(d_wv, d_v.data() + static_cast<size_t>(i) * d_model, x, d_model, d_model);
    matvec_t_acc(w.wq, dqi, d_model, d_model, dx);
    matvec_t_acc(w.wk, dki, d_model, d_model, dx);
    matvec_t_acc(w.wv, d_v.data() + static_cast<size_t>(i) * d_model, d_model, d_model, dx);
  }
}

void dense_attention_reference(const double* tokens, int64_t s, const AttentionWeights& w,
                               bool causal, const NeighborTable* layout, double* out,
                               AttnStats* stats, const int64_t* positions) {
  const int d_model = w.dim;
  const int head_dim = d_model / w.heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(head_dim));

  std::vector<double> q_rot, k_rot, v;
  project_and_rotate(tokens, s, w, positions, &q_rot, &k_rot, &v);
  std::vector<double> cat(static_cast<size_t>(s) * d_model, 0.0);

  auto allowed = [&](int64_t i, int64_t j) {
    if (!causal) return true;
    if (layout) {
      if (layout->has_cls && (i == 0 || j == 0)) return true;
      return layout->frame_of(j) <= layout->frame_of(i);
    }
    return j <= i;
  };

  std::vector<double> logits(static_cast<size_t>(s));
  std::vector<double> exps(static_cast<size_t>(s));
  std::vector<int64_t> js(static_cast<size_t>(s));
  for (int h = 0; h < w.heads; ++h) {
    const int off = h * head_dim;
    for (int64_t i = 0; i < s; ++i) {
      const double* qi = q_rot.data() + static_cast<size_t>(i) * d_model + off;
      int64_t n = 0;
      for (int64_t j = 0; j < s; ++j) {
        if (!allowed(i, j)) continue;
        const double* kj = k_rot.data() + static_cast<size_t>(j) * d_model + off;
        double acc = 0.0;
        for (int c = 0; c < head_dim; ++c) acc += qi[c] * kj[c];
        logits[static_cast<size_t>(n)] = acc * inv_sqrt_d;
        js[static_cast<size_t>(n)] = j;
        ++n;
      }
      if (stats && h == 0) {
        stats->scores_evaluated += n;
        stats->edges_attended += n;
      }
      double max_logit = -1e300;
      for (int64_t e = 0; e < n; ++e) max_logit = std::max(max_logit, logits[static_cast<size_t>(e)]);
      double z = 0.0;
      for (int64_t e = 0; e < n; ++e) {
        exps[static_cast<size_t>(e)] = std::exp(logits[static_cast<size_t>(e)] - max_logit);
        z += exps[static_cast<size_t>(e)];
      }
      double* oi = cat.data() + static_cast<size_t>(i) * d_model + off;
      for (int64_t e = 0; e < n; ++e) {
        double alpha = exps[static_cast<size_t>(e)] / z;
        const double* vj = v.data() + static_cast<size_t>(js[static_cast<size_t>(e)]) * d_model + off;
        for (int c = 0; c < head_dim; ++c) oi[c] += alpha * vj[c];
      }
    }
  }
  for (int64_t i = 0; i < s; ++i)
    matvec(w.wo, cat.data() + static_cast<size_t>(i) * d_model, d_model, d_model,
           out + static_cast<size_t>(i) * d_model);
}

int64_t analytic_edges(const NeighborTable& table, const RoutingConfig& rc) {
  int64_t total = 0;
  for (int64_t i = 0; i < table.n_tokens(); ++i) {
    int64_t deg = table.degree(i);
    total += rc.enabled ? routed_size(deg, rc) : deg;
  }
  return total;
}

}  // namespace stcm
