#pragma once

#include <cmath>
#include <functional>

#include "stcm/model.hpp"

namespace stcm::testutil {

struct GradCheckReport {
  size_t checked = 0;
  size_t failures = 0;
  double worst_abs = 0.0;
  double worst_rel = 0.0;
  size_t worst_index = 0;
};

// Central finite differences against analytic gradients over the full
// parameter vector. Pass criterion per parameter:
//   |fd - analytic| <= max(rel_tol * max(|fd|, |analytic|), abs_floor)
inline GradCheckReport finite_diff_check(ModelState& state,
                                         const std::function<double()>& loss_fn,
                                         const std::vector<double>& analytic, double step,
                                         double rel_tol, double abs_floor, size_t stride = 1) {
  GradCheckReport rep;
  for (size_t i = 0; i < state.n_params; i += stride) {
    double orig = state.params[i];
    state.params[i] = orig + step;
    double lp = loss_fn();
    state.params[i] = orig - step;
    double lm = loss_fn();
    state.params[i] = orig;
    double fd = (lp - lm) / (2.0 * step);
    double an = analytic[i];
    double diff = std::abs(fd - an);
    double scale = std::max(std::abs(fd), std::abs(an));
    double rel = scale > 0 ? diff / scale : 0.0;
    ++rep.checked;
    bool ok = diff <= std::max(rel_tol * scale, abs_floor);
    if (!ok) {
      ++rep.failures;
      if (diff > rep.worst_abs) {
        rep.worst_abs = diff;
        rep.worst_rel = rel;
        rep.worst_index = i;
      }
    }
  }
  return rep;
}

// The shipped init keeps the cls/mask embeddings near zero; LayerNorm of a
// near-zero row has third derivatives of order 1/sigma^3, which dominates the
// h^2 truncation term of central differences at h=1e-4. Scaling those two
// rows to a generic magnitude conditions the check without changing the code
// paths under test.
inline void condition_embeddings_for_fd(ModelState& state) {
  const int d = state.cfg.d_model;
  for (int c = 0; c < d; ++c) {
    state.params[state.off_cls + static_cast<size_t>(c)] *= 25.0;
    state.params[state.off_mask + static_cast<size_t>(c)] *= 25.0;
  }
}

inline AdSequence random_ad_sequence(int t, int h, int w, uint64_t seed, double scale = 0.7) {
  AdSequence seq;
  seq.t_frames = t;
  seq.h = h;
  seq.w = w;
  seq.frames.resize(static_cast<size_t>(t) * h * w);
  Rng rng(seed);
  for (auto& v : seq.frames) v = {scale * rng.normal(), scale * rng.normal()};
  return seq;
}

}  // namespace stcm::testutil
