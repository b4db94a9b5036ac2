#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stcm/config.hpp"
#include "stcm/model.hpp"

namespace stcm {

AdSequence augment(const AdSequence& seq, Rng& rng, const AugmentConfig& cfg);

// Linear warmup to lr_peak, cosine decay to lr_peak*lr_min_ratio at the last
// step.
double lr_at(int64_t step, const TrainLoopConfig& cfg);

struct AdamState {
  std::vector<double> m, v;
  explicit AdamState(size_t n) : m(n, 0.0), v(n, 0.0) {}
  AdamState() = default;
};

// Half-open [begin, end) window of trainable parameters; everything outside
// stays untouched (frozen fine-tuning).
struct TrainableRange {
  size_t begin = 0;
  size_t end = 0;
  bool all = true;
};

double global_grad_norm(const std::vector<double>& grads);

// Clips by global norm, then applies decoupled AdamW. `step` is 0-based; bias
// correction uses step+1.
void optimizer_step(ModelState& state, std::vector<double>& grads, AdamState& adam, int64_t step,
                    double lr, const TrainLoopConfig& cfg,
                    const TrainableRange& trainable = TrainableRange{});

struct Checkpoint {
  ModelState state;
  AdamState adam;
  int64_t step = 0;
  uint64_t seed = 0;
  std::string config_hash;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
uint64_t file_hash(const std::string& path);

struct PretrainResult {
  ModelState state;
  AdamState adam;
  int64_t steps_run = 0;
  std::string final_checkpoint;
  std::vector<double> loss_log;
};

struct LogRow {
  int64_t step;
  double loss;
  double rho;
  double lr;
  MaskMode mode;
};

// Masked-channel pretraining over in-memory angle-delay sequences.
// Per step: sample batch, rms-normalize, augment, mask (mode + curriculum),
// corrupt, forward/backward, clip, AdamW. Deterministic given (cfg, seed,
// dataset) for any thread count: per-item gradients are reduced in item
// order.
PretrainResult pretrain(const std::vector<AdSequence>& train_set, const GlobalConfig& cfg,
                        const std::string& out_dir,
                        const std::optional<std::string>& resume_path = std::nullopt,
                        std::vector<LogRow>* log_rows = nullptr);

// Mean masked NMSE in dB over the given sequences with deterministic masks
// at the given ratio (auto mixture).
double eval_masked_nmse_db(const ModelState& state, const std::vector<AdSequence>& seqs,
                           double rho, const GlobalConfig& cfg, uint64_t seed);

}  // namespace stcm
