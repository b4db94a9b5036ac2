#include "stcm/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stcm {

const char* mask_mode_name(MaskMode m) {
  switch (m) {
    case MaskMode::rect: return "rect";
    case MaskMode::tube: return "tube";
    case MaskMode::comb: return "comb";
    case MaskMode::random: return "random";
  }
  return "?";
}

int64_t MaskGrid::popcount() const {
  int64_t n = 0;
  for (uint8_t v : mask) n += v;
  return n;
}

int64_t mask_budget(double rho, int64_t tokens) {
  return static_cast<int64_t>(std::floor(rho * static_cast<double>(tokens) + 1e-9));
}

namespace {

void validate_rho(double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw ValidationError("mask ratio must lie in (0,1)");
}

size_t flat(MaskDims d, int t, int h, int w) {
  return (static_cast<size_t>(t) * d.h + h) * d.w + w;
}

void snapshot_pre_trim(const MaskGrid& grid, MaskDebug* debug) {
  if (debug) debug->pre_trim = grid.mask;
}

}  // namespace

void enforce_exact_ratio(MaskGrid& grid, int64_t k, Rng& rng) {
  int64_t total = grid.dims.tokens();
  if (k > total) throw ValidationError("mask budget exceeds token count");
  int64_t have = grid.popcount();
  if (have == k) {
    grid.budget = k;
    return;
  }
  // Collect candidate indices of the over-represented state and flip a
  // uniform random subset of them.
  uint8_t from = have > k ? 1 : 0;
  int64_t flips = std::abs(have - k);
  std::vector<int64_t> candidates;
  candidates.reserve(static_cast<size_t>(from ? have : total - have));
  for (int64_t i = 0; i < total; ++i)
    if (grid.mask[static_cast<size_t>(i)] == from) candidates.push_back(i);
  // partial Fisher-Yates for the first `flips` slots
  for (int64_t i = 0; i < flips; ++i) {
    int64_t j = i + rng.below(static_cast<int64_t>(candidates.size()) - i);
    std::swap(candidates[static_cast<size_t>(i)], candidates[static_cast<size_t>(j)]);
    grid.mask[static_cast<size_t>(candidates[static_cast<size_t>(i)])] = from ? 0 : 1;
  }
  grid.budget = k;
}

MaskGrid mask_rect(MaskDims dims, double rho, Rng& rng, const RectMaskConfig& cfg,
                   MaskDebug* debug) {
  validate_rho(rho);
  MaskGrid grid{dims, std::vector<uint8_t>(static_cast<size_t>(dims.tokens()), 0),
                MaskMode::rect, 0};
  int64_t k = mask_budget(rho, dims.tokens());

  int64_t covered = 0;
  int stalls = 0;
  while (covered < k) {
    int kh = static_cast<int>(rng.range(std::min(cfg.kh_min, dims.h), std::min(cfg.kh_max, dims.h)));
    int kw = static_cast<int>(rng.range(std::min(cfg.kw_min, dims.w), std::min(cfg.kw_max, dims.w)));
    int t = static_cast<int>(rng.below(dims.t));
    int h0 = static_cast<int>(rng.below(dims.h - kh + 1));
    int w0 = static_cast<int>(rng.below(dims.w - kw + 1));
    int64_t before = covered;
    for (int h = h0; h < h0 + kh; ++h)
      for (int w = w0; w < w0 + kw; ++w) {
        uint8_t& cell = grid.mask[flat(dims, t, h, w)];
        if (!cell) {
          cell = 1;
          ++covered;
        }
      }
    if (debug) debug->blocks.push_back({t, h0, w0, kh, kw});
    if (covered == before && ++stalls > 1000) {
      // random placement failed to find fresh cells; finish with 1x1 blocks
      for (int64_t i = 0; covered < k && i < dims.tokens(); ++i) {
        int64_t j = rng.below(dims.tokens());
        if (!grid.mask[static_cast<size_t>(j)]) {
          grid.mask[static_cast<size_t>(j)] = 1;
          ++covered;
          if (debug) {
            int t1 = static_cast<int>(j / (dims.h * dims.w));
            int rem = static_cast<int>(j % (dims.h * dims.w));
            debug->blocks.push_back({t1, rem / dims.w, rem % dims.w, 1, 1});
          }
        }
      }
    }
  }
  snapshot_pre_trim(grid, debug);
  enforce_exact_ratio(grid, k, rng);
  return grid;
}

MaskGrid mask_tube(MaskDims dims, double rho, Rng& rng, const TubeMaskConfig& cfg,
                   MaskDebug* debug) {
  validate_rho(rho);
  if (cfg.delta_h < 0 || cfg.delta_w < 0) throw ValidationError("tube drift bounds must be >= 0");
  MaskGrid grid{dims, std::vector<uint8_t>(static_cast<size_t>(dims.tokens()), 0),
                MaskMode::tube, 0};
  int64_t k = mask_budget(rho, dims.tokens());
  int rh = std::min(cfg.r_h, dims.h);
  int rw = std::min(cfg.r_w, dims.w);

  int64_t covered = 0;
  int guard = 0;
  while (covered < k && ++guard < 100000) {
    int t0 = static_cast<int>(rng.below(dims.t));
    int len = static_cast<int>(rng.range(std::min(2, dims.t - t0), dims.t - t0));
    int h0 = static_cast<int>(rng.below(dims.h - rh + 1));
    int w0 = static_cast<int>(rng.below(dims.w - rw + 1));
    std::vector<std::array<int, 3>> origins;
    for (int s = 0; s < len; ++s) {
      int t = t0 + s;
      origins.push_back({t, h0, w0});
      for (int h = h0; h < h0 + rh; ++h)
        for (int w = w0; w < w0 + rw; ++w) {
          uint8_t& cell = grid.mask[flat(dims, t, h, w)];
          if (!cell) {
            cell = 1;
            ++covered;
          }
        }
      h0 = std::clamp(h0 + static_cast<int>(rng.range(-cfg.delta_h, cfg.delta_h)), 0,
                      dims.h - rh);
      w0 = std::clamp(w0 + static_cast<int>(rng.range(-cfg.delta_w, cfg.delta_w)), 0,
                      dims.w - rw);
    }
    if (debug) debug->tubes.push_back(std::move(origins));
  }
  // Pathological configs (tiny grids) may stall; top up with single-frame tubes.
  while (covered < k) {
    int64_t j = rng.below(dims.tokens());
    if (!grid.mask[static_cast<size_t>(j)]) {
      grid.mask[static_cast<size_t>(j)] = 1;
      ++covered;
    }
  }
  snapshot_pre_trim(grid, debug);
  enforce_exact_ratio(grid, k, rng);
  return grid;
}

MaskGrid mask_comb(MaskDims dims, double rho, Rng& rng, const CombMaskConfig& cfg,
                   MaskDebug* debug) {
  validate_rho(rho);
  if (cfg.st_choices.empty() || cfg.sw_choices.empty())
    throw ValidationError("comb stride choices must be nonempty");
  for (int s : cfg.st_choices)
    if (s < 1) throw ValidationError("comb strides must be >= 1");
  for (int s : cfg.sw_choices)
    if (s < 1) throw ValidationError("comb strides must be >= 1");

  int st = cfg.st_choices[static_cast<size_t>(rng.below(static_cast<int64_t>(cfg.st_choices.size())))];
  int sw = cfg.sw_choices[static_cast<size_t>(rng.below(static_cast<int64_t>(cfg.sw_choices.size())))];
  int ot = static_cast<int>(rng.below(st));
  int ow = static_cast<int>(rng.below(sw));

  MaskGrid grid{dims, std::vector<uint8_t>(static_cast<size_t>(dims.tokens()), 0),
                MaskMode::comb, 0};
  for (int t = 0; t < dims.t; ++t)
    for (int h = 0; h < dims.h; ++h)
      for (int w = 0; w < dims.w; ++w) {
        bool visible = (t % st == ot) && (w % sw == ow);
        grid.mask[flat(dims, t, h, w)] = visible ? 0 : 1;
      }
  if (debug) {
    debug->comb_st = st;
    debug->comb_sw = sw;
    debug->comb_ot = ot;
    debug->comb_ow = ow;
  }
  snapshot_pre_trim(grid, debug);
  enforce_exact_ratio(grid, mask_budget(rho, dims.tokens()), rng);
  return grid;
}

MaskGrid mask_random(MaskDims dims, double rho, Rng& rng) {
  validate_rho(rho);
  MaskGrid grid{dims, std::vector<uint8_t>(static_cast<size_t>(dims.tokens()), 0),
                MaskMode::random, 0};
  enforce_exact_ratio(grid, mask_budget(rho, dims.tokens()), rng);
  return grid;
}

MaskMode sample_mode(Rng& rng, const std::array<double, 4>& mix_weights) {
  double sum = 0.0;
  for (double w : mix_weights) {
    if (w < 0.0) throw ValidationError("mask mix weights must be >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("mask mix weights must sum to 1");
  double u = rng.uniform();
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) {
    acc += mix_weights[static_cast<size_t>(i)];
    if (u < acc) return static_cast<MaskMode>(i);
  }
  return MaskMode::random;
}

double curriculum_rho(int64_t step, int64_t total_steps, const CurriculumSchedule& schedule) {
  if (!(schedule.rho_start <= schedule.rho_end && schedule.rho_end <= 1.0))
    throw ValidationError("curriculum requires rho_start <= rho_end <= 1");
  if (!(schedule.ramp_fraction > 0.0 && schedule.ramp_fraction <= 1.0))
    throw ValidationError("curriculum ramp_fraction must lie in (0,1]");
  double ramp_end = schedule.ramp_fraction * static_cast<double>(total_steps);
  if (step <= 0) return schedule.rho_start;
  if (static_cast<double>(step) >= ramp_end) return schedule.rho_end;
  double u = static_cast<double>(step) / ramp_end;
  return schedule.rho_start + (schedule.rho_end - schedule.rho_start) * u;
}

MaskGrid generate_mask(MaskMode mode, MaskDims dims, double rho, Rng& rng,
                       const MaskingConfig& cfg, MaskDebug* debug) {
  switch (mode) {
    case MaskMode::rect: return mask_rect(dims, rho, rng, cfg.rect, debug);
    case MaskMode::tube: return mask_tube(dims, rho, rng, cfg.tube, debug);
    case MaskMode::comb: return mask_comb(dims, rho, rng, cfg.comb, debug);
    case MaskMode::random: return mask_random(dims, rho, rng);
  }
  throw ValidationError("unknown mask mode");
}

}  // namespace stcm
