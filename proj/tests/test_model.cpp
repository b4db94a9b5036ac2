#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>

#include "doctest.h"
#include "gradcheck_util.hpp"
#include "stcm/model.hpp"

using namespace stcm;
using stcm::testutil::finite_diff_check;
using stcm::testutil::random_ad_sequence;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.depth = 2;
  cfg.heads = 2;
  cfg.mlp_ratio = 4;
  return cfg;
}

NeighborTable tiny_table() {
  NeighborParams p;
  p.r_h = p.r_w = 1;
  p.t_offsets = {-2, -1, 1, 2};
  p.gamma_h = p.gamma_w = 1;
  return build_neighbors(3, 4, 4, p, AttnMode::bidirectional, true);
}

MaskGrid tiny_mask(uint64_t seed, double rho = 0.4) {
  Rng rng(seed);
  return mask_random(MaskDims{3, 4, 4}, rho, rng);
}

}  // namespace

TEST_CASE("token counts at shipped defaults") {
  ModelConfig cfg;  // D=32, patch 1x1
  ModelState state = init_model(cfg, 1);
  AdSequence seq = random_ad_sequence(20, 32, 32, 2);
  TokenGrid grid = tokenize(seq, state);
  CHECK(grid.n_content() == 20 * 1024);
  CHECK(grid.s() == 20481);
}

TEST_CASE("tokenize: zero input gives the bias at every content token; linear without bias") {
  ModelConfig cfg = tiny_config();
  ModelState state = init_model(cfg, 3);
  AdSequence zero;
  zero.t_frames = 2;
  zero.h = 4;
  zero.w = 4;
  zero.frames.assign(32, {0, 0});
  TokenGrid grid = tokenize(zero, state);
  const double* bias = state.p(state.off_patch_b);
  for (int64_t i = 0; i < grid.n_content(); ++i)
    for (int c = 0; c < cfg.d_model; ++c)
      CHECK(grid.x[static_cast<size_t>(i + 1) * cfg.d_model + c] == bias[c]);

  std::fill(state.p(state.off_patch_b), state.p(state.off_patch_b) + cfg.d_model, 0.0);
  AdSequence seq = random_ad_sequence(2, 4, 4, 5);
  AdSequence seq3 = seq;
  for (auto& v : seq3.frames) v *= 3.0;
  TokenGrid a = tokenize(seq, state);
  TokenGrid b = tokenize(seq3, state);
  for (int64_t i = cfg.d_model; i < static_cast<int64_t>(a.x.size()); ++i)
    CHECK(b.x[static_cast<size_t>(i)] == doctest::Approx(3.0 * a.x[static_cast<size_t>(i)]).epsilon(1e-12));

  AdSequence bad;
  bad.t_frames = 1;
  bad.h = 5;
  bad.w = 4;
  bad.frames.assign(20, {0, 0});
  ModelConfig cfg2 = tiny_config();
  cfg2.patch_h = 2;
  CHECK_THROWS_AS(tokenize(bad, init_model(cfg2, 1)), ValidationError);
}

TEST_CASE("mask embedding replaces exactly the masked rows") {
  ModelConfig cfg = tiny_config();
  ModelState state = init_model(cfg, 4);
  AdSequence seq = random_ad_sequence(3, 4, 4, 6);
  TokenGrid grid = tokenize(seq, state);
  TokenGrid orig = grid;

  MaskGrid empty{{3, 4, 4}, std::vector<uint8_t>(48, 0), MaskMode::random, 0};
  apply_mask_embedding(grid, empty, state);
  CHECK(grid.x == orig.x);

  MaskGrid mask = tiny_mask(7);
  apply_mask_embedding(grid, mask, state);
  const double* me = state.p(state.off_mask);
  for (int64_t i = 0; i < grid.n_content(); ++i) {
    const double* row = grid.x.data() + static_cast<size_t>(i + 1) * cfg.d_model;
    if (mask.mask[static_cast<size_t>(i)]) {
      for (int c = 0; c < cfg.d_model; ++c) CHECK(row[c] == me[c]);
    } else {
      for (int c = 0; c < cfg.d_model; ++c)
        CHECK(row[c] == orig.x[static_cast<size_t>(i + 1) * cfg.d_model + c]);
    }
  }
  // CLS untouched
  for (int c = 0; c < cfg.d_model; ++c) CHECK(grid.x[static_cast<size_t>(c)] == orig.x[static_cast<size_t>(c)]);

  MaskGrid wrong{{2, 4, 4}, std::vector<uint8_t>(32, 0), MaskMode::random, 0};
  CHECK_THROWS_AS(apply_mask_embedding(grid, wrong, state), ValidationError);
}

TEST_CASE("backbone: depth zero and zeroed branch outputs are the identity") {
  ModelConfig cfg0 = tiny_config();
  cfg0.depth = 0;
  ModelState s0 = init_model(cfg0, 5);
  AdSequence seq = random_ad_sequence(3, 4, 4, 8);
  TokenGrid grid = tokenize(seq, s0);
  RoutingConfig off;
  TokenGrid out = backbone_forward(grid, s0, tiny_table(), off);
  CHECK(out.x == grid.x);

  ModelConfig cfg = tiny_config();
  ModelState st = init_model(cfg, 5);
  for (int b = 0; b < cfg.depth; ++b) {
    std::fill(st.p(st.block_off(b, st.b_wo)), st.p(st.block_off(b, st.b_wo)) + cfg.d_model * cfg.d_model, 0.0);
    std::fill(st.p(st.block_off(b, st.b_down)),
              st.p(st.block_off(b, st.b_down)) + cfg.d_model * cfg.mlp_hidden(), 0.0);
  }
  TokenGrid grid2 = tokenize(seq, st);
  TokenGrid out2 = backbone_forward(grid2, st, tiny_table(), off);
  CHECK(out2.x == grid2.x);

  // default init stays finite and bounded on unit-scale input
  ModelState healthy = init_model(cfg, 6);
  TokenGrid out3 = backbone_forward(tokenize(seq, healthy), healthy, tiny_table(), off);
  for (double v : out3.x) {
    CHECK(std::isfinite(v));
    CHECK(std::abs(v) < 1e3);
  }
}

TEST_CASE("heads and patch round trip") {
  ModelConfig cfg = tiny_config();
  cfg.patch_h = 2;
  cfg.patch_w = 2;
  ModelState state = init_model(cfg, 9);
  AdSequence seq = random_ad_sequence(2, 4, 6, 10);

  auto patches = extract_patches(seq, 2, 2);
  auto frames = unpatch(patches, 2, 2, 3, 2, 2);
  REQUIRE(frames.size() == seq.frames.size());
  for (size_t i = 0; i < frames.size(); ++i) CHECK(frames[i] == seq.frames[i]);

  TokenGrid grid = tokenize(seq, state);
  RoutingConfig off;
  NeighborParams p;
  p.t_offsets = {-1, 1};
  NeighborTable table = build_neighbors(2, 2, 3, p, AttnMode::bidirectional, true);
  TokenGrid z = backbone_forward(grid, state, table, off);
  auto recon = reconstruction_head(z, state);
  CHECK(recon.size() == static_cast<size_t>(grid.n_content() * cfg.in_channels()));
  auto pred = prediction_head(z, state);
  CHECK(pred.size() == static_cast<size_t>(grid.grid_h * grid.grid_w * cfg.in_channels()));

  std::fill(state.p(state.off_pred_w), state.p(state.off_pred_w) + static_cast<size_t>(cfg.in_channels()) * cfg.d_model, 0.0);
  std::fill(state.p(state.off_pred_b), state.p(state.off_pred_b) + cfg.in_channels(), 0.0);
  auto zero_pred = prediction_head(z, state);
  for (double v : zero_pred) CHECK(v == 0.0);
}

TEST_CASE("nmse loss properties") {
  std::vector<double> target{1.0, 2.0, -0.5, 0.25};
  std::vector<double> pred = target;
  std::vector<int64_t> all{0, 1};
  CHECK(nmse_loss(pred, target, 2, all, 1e-8) == 0.0);

  std::vector<double> zeros(4, 0.0);
  double loss = nmse_loss(zeros, target, 2, all, 1e-8);
  CHECK(loss == doctest::Approx(1.0).epsilon(1e-6));

  std::vector<double> p2 = {0.9, 2.2, -0.3, 0.5};
  double base = nmse_loss(p2, target, 2, all, 1e-8);
  std::vector<double> p2x = p2, tx = target;
  for (auto& v : p2x) v *= 2.0;
  for (auto& v : tx) v *= 2.0;
  CHECK(nmse_loss(p2x, tx, 2, all, 1e-8) == doctest::Approx(base).epsilon(1e-6));

  CHECK_THROWS_AS(nmse_loss(pred, target, 2, {}, 1e-8), ValidationError);
}

TEST_CASE("gradient check: reconstruction objective, routing off") {
  ModelConfig cfg = tiny_config();
  ModelState state = init_model(cfg, 11);
  stcm::testutil::condition_embeddings_for_fd(state);
  AdSequence seq = random_ad_sequence(3, 4, 4, 12);
  MaskGrid mask = tiny_mask(13);
  NeighborTable table = tiny_table();
  RoutingConfig off;

  std::vector<double> grads(state.n_params, 0.0);
  recon_loss_and_grads(state, seq, mask, table, off, &grads);
  auto loss_fn = [&] { return recon_loss_and_grads(state, seq, mask, table, off, nullptr); };
  auto rep = finite_diff_check(state, loss_fn, grads, 1e-4, 1e-4, 1e-7);
  CHECK(rep.failures == 0);
  CHECK(rep.checked == state.n_params);
}

TEST_CASE("gradient check: reconstruction objective, routing on") {
  ModelConfig cfg = tiny_config();
  ModelState state = init_model(cfg, 14);
  stcm::testutil::condition_embeddings_for_fd(state);
  AdSequence seq = random_ad_sequence(3, 4, 4, 15);
  MaskGrid mask = tiny_mask(16);
  NeighborTable table = tiny_table();
  RoutingConfig rc{true, 0.5, 2, 6};

  std::vector<double> grads(state.n_params, 0.0);
  recon_loss_and_grads(state, seq, mask, table, rc, &grads);
  auto loss_fn = [&] { return recon_loss_and_grads(state, seq, mask, table, rc, nullptr); };
  auto rep = finite_diff_check(state, loss_fn, grads, 1e-4, 1e-4, 1e-7);
  CHECK(rep.failures == 0);
}

TEST_CASE("gradient check: prediction objective") {
  ModelConfig cfg = tiny_config();
  ModelState state = init_model(cfg, 17);
  stcm::testutil::condition_embeddings_for_fd(state);
  AdSequence past = random_ad_sequence(3, 4, 4, 18);
  AdSequence target = random_ad_sequence(1, 4, 4, 19);
  NeighborParams p;
  p.r_h = p.r_w = 1;
  p.t_offsets = {-2, -1};
  NeighborTable table = build_neighbors(3, 4, 4, p, AttnMode::causal, true);
  RoutingConfig off;

  std::vector<double> grads(state.n_params, 0.0);
  predict_loss_and_grads(state, past, target.frames, table, off, &grads);
  auto loss_fn = [&] {
    return predict_loss_and_grads(state, past, target.frames, table, off, nullptr);
  };
  auto rep = finite_diff_check(state, loss_fn, grads, 1e-4, 1e-4, 1e-7);
  CHECK(rep.failures == 0);
}

TEST_CASE("zero loss implies zero gradients") {
  ModelConfig cfg = tiny_config();
  ModelState state = init_model(cfg, 20);
  std::fill(state.p(state.off_recon_w),
            state.p(state.off_recon_w) + static_cast<size_t>(cfg.in_channels()) * cfg.d_model, 0.0);
  std::fill(state.p(state.off_recon_b), state.p(state.off_recon_b) + cfg.in_channels(), 0.0);

  AdSequence seq = random_ad_sequence(3, 4, 4, 21);
  MaskGrid mask = tiny_mask(22);
  // zero the target at every masked token: prediction (0) then matches exactly
  for (int64_t i = 0; i < mask.dims.tokens(); ++i)
    if (mask.mask[static_cast<size_t>(i)]) seq.frames[static_cast<size_t>(i)] = 0.0;

  std::vector<double> grads(state.n_params, 0.0);
  RoutingConfig off;
  double loss = recon_loss_and_grads(state, seq, mask, tiny_table(), off, &grads);
  CHECK(loss == 0.0);
  for (double g : grads) CHECK(g == 0.0);
}

TEST_CASE("prediction ignores frames beyond the input window by construction") {
  ModelConfig cfg = tiny_config();
  ModelState state = init_model(cfg, 23);
  AdSequence full = random_ad_sequence(12, 4, 4, 24);
  NeighborParams p;
  p.t_offsets = {-2, -1};
  NeighborTable table = build_neighbors(10, 4, 4, p, AttnMode::causal, true);
  RoutingConfig off;

  auto slice = [&](const AdSequence& s) {
    AdSequence out = s;
    out.t_frames = 10;
    out.frames.assign(s.frames.begin(), s.frames.begin() + 10 * 16);
    return out;
  };
  auto a = predict_forward(state, slice(full), table, off);
  AdSequence tampered = full;
  for (int i = 0; i < 16; ++i) tampered.frames[static_cast<size_t>(11 * 16 + i)] += 5.0;
  auto b = predict_forward(state, slice(tampered), table, off);
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}
