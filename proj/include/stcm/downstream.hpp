#pragma once

#include <map>
#include <string>
#include <vector>

#include "stcm/config.hpp"
#include "stcm/train.hpp"

namespace stcm {

// Frames [t0, t1) as a standalone sequence.
AdSequence ad_slice(const AdSequence& seq, int t0, int t1);

// Baseline predictor: repeats the last observed frame.
std::vector<std::complex<double>> sample_and_hold(const AdSequence& past);

struct FinetuneOptions {
  double fraction = 1.0;  // 0 = frozen backbone, head-only fit on a calibration split
  uint64_t seed = 7;
};

ModelState finetune_predictor(const ModelState& base, const std::vector<AdSequence>& train_seqs,
                              const FinetuneOptions& opt, const GlobalConfig& cfg);

struct EvalRow {
  int bin = 0;
  std::string method;
  double fraction_pct = 0.0;  // -1 for methods without a fine-tuning budget
  double nmse_db = 0.0;       // dataset-level: 10log10(sum err / sum energy)
  double mean_seq_db = 0.0;   // mean of per-sequence NMSE in dB
  int64_t n_sequences = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::string config_hash;
  std::string tool_version = kToolVersion;
};

struct EvalModel {
  std::string method;
  double fraction_pct = -1.0;
  const ModelState* state = nullptr;
};

// One-step prediction over a held-out set: every model plus the S&H baseline,
// binned by sequence speed. Empty bins produce no rows.
EvalReport evaluate(const std::vector<EvalModel>& models, const std::vector<AdSequence>& test_set,
                    const GlobalConfig& cfg);

void write_report_csv(const EvalReport& report, const std::string& path);
void write_report_json(const EvalReport& report, const std::string& path);

// Model prediction for one sequence (raw units): normalize past window, run
// the causal backbone, denormalize.
std::vector<std::complex<double>> model_predict_frame(const ModelState& state,
                                                      const AdSequence& past,
                                                      const NeighborTable& table,
                                                      const RoutingConfig& routing);

struct BenchRow {
  int64_t s = 0;
  std::string method;
  int64_t scores = 0;    // logits evaluated (per head)
  int64_t attended = 0;  // edges surviving routing (per head)
  int64_t hub = 0;       // attended edges touching CLS
  double wall_ms = 0.0;
  double ratio_vs_dense = 0.0;  // dense S^2 / attended
  bool measured = true;         // false when only the analytic count is reported
};

struct BenchResult {
  std::vector<BenchRow> rows;
  bool self_check_ok = true;  // measured counts match the analytic bound
};

// Dense vs SSTA vs SSTA+routing across sequence lengths. Dense above
// `dense_limit` tokens reports the analytic S^2 count without a timed run.
BenchResult bench_attention(const GlobalConfig& cfg, const std::vector<int>& t_frames_list,
                            int64_t dense_limit);

}  // namespace stcm
