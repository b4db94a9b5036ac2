#pragma once

#include <array>
#include <string>
#include <vector>

#include "stcm/attention.hpp"
#include "stcm/common.hpp"
#include "stcm/masking.hpp"
#include "stcm/model.hpp"
#include "stcm/scene.hpp"

namespace stcm {

struct AugmentConfig {
  bool enabled = true;
  double prob = 0.5;  // independent per augmentation
  bool phase = true;
  bool amp = true;
  bool awgn = true;
  double amp_min = 0.5, amp_max = 2.0;
  double snr_min_db = 10.0, snr_max_db = 30.0;
};

struct TrainLoopConfig {
  double lr_peak = 3e-3;
  double lr_min_ratio = 0.01;  // lr_min = lr_peak * ratio
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;
  double warmup_ratio = 0.1;
  int64_t total_steps = 500;
  int batch_size = 16;
  int n_threads = 0;  // 0 = hardware concurrency
  int64_t ckpt_interval = 0;
  AugmentConfig augment;
};

struct AttentionConfig {
  int r_h = 1, r_w = 1;
  std::vector<int> t_offsets{1, 2, 3, 4};  // magnitudes; sign set by mode
  int gamma_h = 1, gamma_w = 1;
  RoutingConfig routing{true, 0.2, 16, 64};
};

// Magnitudes -> signed offsets for the requested mode.
std::vector<int> expand_offsets(const std::vector<int>& magnitudes, AttnMode mode);
NeighborParams neighbor_params(const AttentionConfig& cfg, AttnMode mode);

struct AdtConfig {
  int delay_taps = 32;
};

struct EvalConfig {
  int past_frames = 10;
  std::vector<double> fractions_pct{0, 1, 2, 10, 50, 100};
  std::vector<double> bin_edges{0, 10, 20, 30};
  int64_t ft_steps = 300;
  double ft_lr = 1e-3;
  int ft_batch = 8;
  int calib_sequences = 32;
  double clamp_db = -100.0;
};

struct GlobalConfig {
  uint64_t seed = 1;
  SceneConfig scene;
  AdtConfig adt;
  MaskingConfig mask;
  AttentionConfig attention;
  ModelConfig model;
  TrainLoopConfig train;
  EvalConfig eval;
};

// Strict load: unknown keys or wrong types are rejected; absent keys keep
// defaults.
GlobalConfig load_config(const std::string& path);
GlobalConfig config_from_json_text(const std::string& text);

std::string config_to_json(const GlobalConfig& cfg);

// FNV-1a over the canonical JSON dump of the effective config.
std::string config_hash(const GlobalConfig& cfg);

}  // namespace stcm
