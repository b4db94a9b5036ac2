#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "gradcheck_util.hpp"
#include "stcm/train.hpp"

using namespace stcm;
using stcm::testutil::random_ad_sequence;

namespace {

GlobalConfig toy_global() {
  GlobalConfig cfg;
  cfg.model.d_model = 8;
  cfg.model.depth = 1;
  cfg.model.heads = 2;
  cfg.attention.t_offsets = {1, 2};
  cfg.attention.routing.k_min = 2;
  cfg.attention.routing.k_max = 8;
  cfg.mask.rect.kh_min = 2;
  cfg.mask.rect.kh_max = 4;
  cfg.train.total_steps = 5;
  cfg.train.batch_size = 2;
  cfg.train.n_threads = 1;
  return cfg;
}

std::vector<AdSequence> toy_dataset(int n, uint64_t seed) {
  std::vector<AdSequence> out;
  for (int i = 0; i < n; ++i) {
    AdSequence s = random_ad_sequence(3, 8, 8, seed + static_cast<uint64_t>(i));
    s.meta.velocity = {1.0 * i, 0.0};
    out.push_back(std::move(s));
  }
  return out;
}

std::string temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("augmentations: phase preserves magnitudes, disabled is identity") {
  AdSequence seq = random_ad_sequence(2, 4, 4, 1);
  {
    AugmentConfig cfg;
    cfg.enabled = false;
    Rng rng(2);
    AdSequence out = augment(seq, rng, cfg);
    CHECK(out.frames == seq.frames);
  }
  {
    AugmentConfig cfg;
    cfg.prob = 1.0;
    cfg.amp = false;
    cfg.awgn = false;
    Rng rng(3);
    AdSequence out = augment(seq, rng, cfg);
    for (size_t i = 0; i < seq.frames.size(); ++i)
      CHECK(std::abs(std::abs(out.frames[i]) - std::abs(seq.frames[i])) < 1e-12);
  }
}

TEST_CASE("awgn injection hits the target snr within half a dB") {
  AdSequence seq = random_ad_sequence(20, 32, 32, 4, 1.0);
  AugmentConfig cfg;
  cfg.prob = 1.0;
  cfg.phase = false;
  cfg.amp = false;
  cfg.snr_min_db = 20.0;
  cfg.snr_max_db = 20.0;
  Rng rng(5);
  AdSequence out = augment(seq, rng, cfg);
  double sig = 0.0, noise = 0.0;
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    sig += std::norm(seq.frames[i]);
    noise += std::norm(out.frames[i] - seq.frames[i]);
  }
  double snr_db = 10.0 * std::log10(sig / noise);
  CHECK(std::abs(snr_db - 20.0) < 0.5);
}

TEST_CASE("amplitude scaling tracked in the rms field") {
  AdSequence seq = random_ad_sequence(2, 4, 4, 6);
  AugmentConfig cfg;
  cfg.prob = 1.0;
  cfg.phase = false;
  cfg.awgn = false;
  cfg.amp_min = 2.0;
  cfg.amp_max = 2.0;
  Rng rng(7);
  AdSequence out = augment(seq, rng, cfg);
  CHECK(out.rms == doctest::Approx(2.0 * seq.rms));
  for (size_t i = 0; i < seq.frames.size(); ++i)
    CHECK(std::abs(out.frames[i] - 2.0 * seq.frames[i]) < 1e-12);
}

TEST_CASE("learning-rate schedule endpoints") {
  TrainLoopConfig cfg;
  cfg.lr_peak = 3e-3;
  cfg.total_steps = 1000;
  cfg.warmup_ratio = 0.1;
  CHECK(lr_at(0, cfg) == 0.0);
  CHECK(lr_at(100, cfg) == doctest::Approx(3e-3));
  CHECK(std::abs(lr_at(999, cfg) - 3e-5) < 1e-12);
  CHECK(lr_at(50, cfg) == doctest::Approx(1.5e-3));
}

TEST_CASE("optimizer: no-op on zero gradients, clip, single-step direction") {
  ModelConfig mc;
  mc.d_model = 8;
  mc.depth = 1;
  mc.heads = 2;
  ModelState state = init_model(mc, 1);
  std::vector<double> before = state.params;
  AdamState adam(state.n_params);
  TrainLoopConfig cfg;
  cfg.weight_decay = 0.0;

  std::vector<double> zeros(state.n_params, 0.0);
  optimizer_step(state, zeros, adam, 0, 1e-3, cfg);
  CHECK(state.params == before);

  // global-norm clip to 1.0
  std::vector<double> grads(state.n_params, 0.0);
  grads[0] = 6.0;
  grads[1] = 8.0;  // norm 10
  std::vector<double> copy = grads;
  ModelState s2 = state;
  AdamState a2(state.n_params);
  optimizer_step(s2, copy, a2, 0, 1e-3, cfg);
  CHECK(global_grad_norm(copy) == doctest::Approx(1.0).epsilon(1e-12));

  // one-step update of a single parameter: -lr * sign(g) within eps effects
  ModelState s3 = state;
  AdamState a3(state.n_params);
  std::vector<double> g3(state.n_params, 0.0);
  g3[5] = 0.5;  // below clip
  double p0 = s3.params[5];
  optimizer_step(s3, g3, a3, 0, 1e-3, cfg);
  CHECK(s3.params[5] == doctest::Approx(p0 - 1e-3).epsilon(1e-6));
}

TEST_CASE("checkpoints round-trip bit exactly") {
  ModelConfig mc;
  mc.d_model = 8;
  mc.depth = 2;
  mc.heads = 2;
  ModelState state = init_model(mc, 3);
  AdamState adam(state.n_params);
  Rng rng(4);
  for (auto& v : adam.m) v = rng.normal();
  for (auto& v : adam.v) v = std::abs(rng.normal());

  std::string dir = temp_dir("stcm_ckpt_test");
  std::string path = dir + "/ckpt.bin";
  save_checkpoint(path, {state, adam, 42, 777, "deadbeef"});
  Checkpoint back = load_checkpoint(path);
  CHECK(back.state.params == state.params);
  CHECK(back.adam.m == adam.m);
  CHECK(back.adam.v == adam.v);
  CHECK(back.step == 42);
  CHECK(back.seed == 777);
  CHECK(back.config_hash == "deadbeef");

  std::string path2 = dir + "/ckpt2.bin";
  save_checkpoint(path2, back);
  CHECK(file_hash(path) == file_hash(path2));
}

TEST_CASE("pretraining runs, logs, and resumes bit-identically") {
  GlobalConfig cfg = toy_global();
  cfg.train.ckpt_interval = 3;  // leaves a mid-run checkpoint behind
  auto data = toy_dataset(8, 100);

  std::string dir_a = temp_dir("stcm_pretrain_a");
  std::vector<LogRow> rows;
  PretrainResult full = pretrain(data, cfg, dir_a, std::nullopt, &rows);
  CHECK(rows.size() == 5);
  for (const auto& r : rows) CHECK(std::isfinite(r.loss));
  CHECK(rows.front().rho == doctest::Approx(cfg.mask.curriculum.rho_start));

  // resuming from the mid-run checkpoint reproduces the same final bytes
  std::string dir_c = temp_dir("stcm_pretrain_c");
  pretrain(data, cfg, dir_c, dir_a + "/ckpt_step3.bin");
  CHECK(file_hash(dir_a + "/ckpt_final.bin") == file_hash(dir_c + "/ckpt_final.bin"));

  // determinism across reruns and thread counts
  std::string dir_d = temp_dir("stcm_pretrain_d");
  GlobalConfig cfg_mt = cfg;
  cfg_mt.train.n_threads = 4;
  pretrain(data, cfg_mt, dir_d);
  CHECK(file_hash(dir_a + "/ckpt_final.bin") == file_hash(dir_d + "/ckpt_final.bin"));
}

TEST_CASE("masked eval helper returns a finite dB value") {
  GlobalConfig cfg = toy_global();
  auto data = toy_dataset(4, 50);
  ModelState state = init_model(cfg.model, cfg.seed);
  double db = eval_masked_nmse_db(state, data, 0.4, cfg, 9);
  CHECK(std::isfinite(db));
}
