#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "stcm/common.hpp"

namespace stcm {

enum class MaskMode { rect = 0, tube = 1, comb = 2, random = 3 };

const char* mask_mode_name(MaskMode m);

struct MaskDims {
  int t = 0, h = 0, w = 0;
  int64_t tokens() const { return static_cast<int64_t>(t) * h * w; }
};

struct MaskGrid {
  MaskDims dims;
  std::vector<uint8_t> mask;  // t*h*w, 1 = masked
  MaskMode mode = MaskMode::random;
  int64_t budget = 0;

  int64_t popcount() const;
  bool at(int t, int h, int w) const {
    return mask[(static_cast<size_t>(t) * dims.h + h) * dims.w + w] != 0;
  }
};

struct CurriculumSchedule {
  double rho_start = 0.15;
  double rho_end = 0.60;
  double ramp_fraction = 0.5;
};

struct RectMaskConfig {
  int kh_min = 4, kh_max = 12;
  int kw_min = 1, kw_max = 4;
};

struct TubeMaskConfig {
  int r_h = 2, r_w = 2;
  int delta_h = 1, delta_w = 1;
};

struct CombMaskConfig {
  std::vector<int> st_choices{2, 4};
  std::vector<int> sw_choices{2, 4};
};

struct MaskingConfig {
  std::array<double, 4> mix_weights{0.3, 0.3, 0.3, 0.1};  // rect, tube, comb, random
  CurriculumSchedule curriculum;
  RectMaskConfig rect;
  TubeMaskConfig tube;
  CombMaskConfig comb;
};

// Generator internals kept for verification: pre-trim pattern plus the
// structures that produced it.
struct MaskDebug {
  std::vector<uint8_t> pre_trim;
  struct Block {
    int t, h0, w0, kh, kw;
  };
  std::vector<Block> blocks;                           // rect
  std::vector<std::vector<std::array<int, 3>>> tubes;  // per tube: (t, h0, w0) origins
  int comb_st = 0, comb_sw = 0, comb_ot = 0, comb_ow = 0;
};

// floor(rho * L) with a nudge for binary rounding of decimal ratios.
int64_t mask_budget(double rho, int64_t tokens);

MaskGrid mask_rect(MaskDims dims, double rho, Rng& rng, const RectMaskConfig& cfg,
                   MaskDebug* debug = nullptr);
MaskGrid mask_tube(MaskDims dims, double rho, Rng& rng, const TubeMaskConfig& cfg,
                   MaskDebug* debug = nullptr);
MaskGrid mask_comb(MaskDims dims, double rho, Rng& rng, const CombMaskConfig& cfg,
                   MaskDebug* debug = nullptr);
MaskGrid mask_random(MaskDims dims, double rho, Rng& rng);

// Trims or pads uniformly at random until popcount == k.
void enforce_exact_ratio(MaskGrid& grid, int64_t k, Rng& rng);

MaskMode sample_mode(Rng& rng, const std::array<double, 4>& mix_weights);

double curriculum_rho(int64_t step, int64_t total_steps, const CurriculumSchedule& schedule);

// Mode dispatch used by the training loop.
MaskGrid generate_mask(MaskMode mode, MaskDims dims, double rho, Rng& rng,
                       const MaskingConfig& cfg, MaskDebug* debug = nullptr);

}  // namespace stcm
