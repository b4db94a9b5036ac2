#include "stcm/downstream.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "stcm/dataset_io.hpp"

namespace stcm {

AdSequence ad_slice(const AdSequence& seq, int t0, int t1) {
  if (t0 < 0 || t1 > seq.t_frames || t0 >= t1) throw ValidationError("ad_slice: bad range");
  AdSequence out;
  out.t_frames = t1 - t0;
  out.h = seq.h;
  out.w = seq.w;
  out.rms = seq.rms;
  out.meta = seq.meta;
  size_t per_frame = static_cast<size_t>(seq.h) * seq.w;
  out.frames.assign(seq.frames.begin() + static_cast<long>(t0 * per_frame),
                    seq.frames.begin() + static_cast<long>(t1 * per_frame));
  return out;
}

std::vector<std::complex<double>> sample_and_hold(const AdSequence& past) {
  if (past.t_frames < 1) throw ValidationError("sample_and_hold: needs at least one frame");
  size_t per_frame = static_cast<size_t>(past.h) * past.w;
  return {past.frames.end() - static_cast<long>(per_frame), past.frames.end()};
}

std::vector<std::complex<double>> model_predict_frame(const ModelState& state,
                                                      const AdSequence& past,
                                                      const NeighborTable& table,
                                                      const RoutingConfig& routing) {
  AdSequence normed = rms_normalize(past);
  double scale = normed.rms / past.rms;  // factor divided out here
  std::vector<double> patches = predict_forward(state, normed, table, routing);
  auto frame = unpatch(patches, 1, past.h / state.cfg.patch_h, past.w / state.cfg.patch_w,
                       state.cfg.patch_h, state.cfg.patch_w);
  for (auto& v : frame) v *= scale;
  return frame;
}

ModelState finetune_predictor(const ModelState& base, const std::vector<AdSequence>& train_seqs,
                              const FinetuneOptions& opt, const GlobalConfig& cfg) {
  if (opt.fraction < 0.0 || opt.fraction > 1.0)
    throw ValidationError("finetune: fraction must lie in [0,1]");
  const int past = cfg.eval.past_frames;
  for (const auto& s : train_seqs)
    if (s.t_frames < past + 1)
      throw ValidationError("finetune: sequences need at least past_frames+1 frames");

  bool frozen = opt.fraction == 0.0;
  int64_t n_train;
  if (frozen) {
    n_train = std::min<int64_t>(cfg.eval.calib_sequences,
                                static_cast<int64_t>(train_seqs.size()));
  } else {
    n_train = static_cast<int64_t>(
        std::ceil(opt.fraction * static_cast<double>(train_seqs.size())));
  }
  if (n_train < 1) throw ValidationError("finetune: empty subset at the requested fraction");

  const int gh = train_seqs.front().h / cfg.model.patch_h;
  const int gw = train_seqs.front().w / cfg.model.patch_w;
  NeighborTable table = build_neighbors(past, gh, gw,
                                        neighbor_params(cfg.attention, AttnMode::causal),
                                        AttnMode::causal, true);

  ModelState state = base;
  AdamState adam(state.n_params);
  TrainLoopConfig loop = cfg.train;
  loop.lr_peak = cfg.eval.ft_lr;
  loop.total_steps = cfg.eval.ft_steps;
  loop.batch_size = cfg.eval.ft_batch;
  TrainableRange trainable;
  if (frozen) {
    trainable.all = false;
    trainable.begin = state.off_pred_w;
    trainable.end = state.n_params;
  }

  const int threads = resolve_threads(loop.n_threads);
  const int batch = loop.batch_size;
  std::vector<std::vector<double>> item_grads(static_cast<size_t>(batch));
  for (auto& g : item_grads) g.assign(state.n_params, 0.0);
  std::vector<double> item_loss(static_cast<size_t>(batch));
  std::vector<double> grads(state.n_params);
  size_t per_frame = static_cast<size_t>(train_seqs.front().h) * train_seqs.front().w;

  for (int64_t step = 0; step < loop.total_steps; ++step) {
    Rng batch_rng(derive_seed(opt.seed, "ft-batch", static_cast<uint64_t>(step)));
    std::vector<int64_t> picks(static_cast<size_t>(batch));
    for (auto& p : picks) p = batch_rng.below(n_train);

    parallel_for(batch, threads, [&](int64_t item) {
      const AdSequence& seq = train_seqs[static_cast<size_t>(picks[static_cast<size_t>(item)])];
      AdSequence input = rms_normalize(ad_slice(seq, 0, past));
      double inv_scale = input.rms / seq.rms;  // target in the same normalized units
      std::vector<std::complex<double>> target(
          seq.frames.begin() + static_cast<long>(past * per_frame),
          seq.frames.begin() + static_cast<long>((past + 1) * per_frame));
      for (auto& v : target) v /= inv_scale;
      std::fill(item_grads[static_cast<size_t>(item)].begin(),
                item_grads[static_cast<size_t>(item)].end(), 0.0);
      item_loss[static_cast<size_t>(item)] =
          predict_loss_and_grads(state, input, target, table, cfg.attention.routing,
                                 &item_grads[static_cast<size_t>(item)]);
    });

    std::fill(grads.begin(), grads.end(), 0.0);
    double loss = 0.0;
    for (int item = 0; item < batch; ++item) {
      loss += item_loss[static_cast<size_t>(item)];
      const auto& g = item_grads[static_cast<size_t>(item)];
      for (size_t i = 0; i < grads.size(); ++i) grads[i] += g[i];
    }
    loss /= batch;
    double inv_b = 1.0 / batch;
    for (double& g : grads) g *= inv_b;
    if (!std::isfinite(loss))
      throw NumericError("non-finite fine-tuning loss at step " + std::to_string(step));
    optimizer_step(state, grads, adam, step, lr_at(step, loop), loop, trainable);
  }
  return state;
}

EvalReport evaluate(const std::vector<EvalModel>& models, const std::vector<AdSequence>& test_set,
                    const GlobalConfig& cfg) {
  const int past = cfg.eval.past_frames;
  for (const auto& s : test_set)
    if (s.t_frames < past + 1)
      throw ValidationError("evaluate: test sequences need at least past_frames+1 frames");
  if (test_set.empty()) throw ValidationError("evaluate: empty test set");

  const int n_bins = static_cast<int>(cfg.eval.bin_edges.size()) - 1;
  struct Acc {
    double err = 0.0, energy = 0.0, db_sum = 0.0;
    int64_t n = 0;
  };
  // method key -> per-bin accumulators
  std::map<std::string, std::vector<Acc>> acc;
  std::map<std::string, double> fraction_of;

  const int gh = test_set.front().h / cfg.model.patch_h;
  const int gw = test_set.front().w / cfg.model.patch_w;
  NeighborTable table = build_neighbors(past, gh, gw,
                                        neighbor_params(cfg.attention, AttnMode::causal),
                                        AttnMode::causal, true);

  auto clamp_db = [&](double db) { return std::max(db, cfg.eval.clamp_db); };
  size_t per_frame = static_cast<size_t>(test_set.front().h) * test_set.front().w;

  acc["sh"].resize(static_cast<size_t>(n_bins));
  fraction_of["sh"] = -1.0;
  for (const auto& m : models) {
    acc[m.method].resize(static_cast<size_t>(n_bins));
    fraction_of[m.method] = m.fraction_pct;
  }

  for (const auto& seq : test_set) {
    double speed = norm(seq.meta.velocity);
    int bin = velocity_bin(speed, cfg.eval.bin_edges);
    AdSequence window = ad_slice(seq, 0, past);
    std::vector<std::complex<double>> truth(
        seq.frames.begin() + static_cast<long>(past * per_frame),
        seq.frames.begin() + static_cast<long>((past + 1) * per_frame));
    double energy = 0.0;
    for (const auto& v : truth) energy += std::norm(v);

    auto tally = [&](const std::string& method, const std::vector<std::complex<double>>& pred) {
      double err = 0.0;
      for (size_t i = 0; i < truth.size(); ++i) err += std::norm(pred[i] - truth[i]);
      Acc& a = acc[method][static_cast<size_t>(bin)];
      a.err += err;
      a.energy += energy;
      a.db_sum += clamp_db(10.0 * std::log10(err / std::max(energy, 1e-300)));
      a.n += 1;
    };

    tally("sh", sample_and_hold(window));
    for (const auto& m : models)
      tally(m.method, model_predict_frame(*m.state, window, table, cfg.attention.routing));
  }

  EvalReport report;
  report.config_hash = config_hash(cfg);
  for (const auto& [method, bins] : acc) {
    for (int b = 0; b < n_bins; ++b) {
      const Acc& a = bins[static_cast<size_t>(b)];
      if (a.n == 0) continue;  // empty bins are absent, not zero
      EvalRow row;
      row.bin = b;
      row.method = method;
      row.fraction_pct = fraction_of[method];
      row.nmse_db = clamp_db(10.0 * std::log10(a.err / std::max(a.energy, 1e-300)));
      row.mean_seq_db = a.db_sum / static_cast<double>(a.n);
      row.n_sequences = a.n;
      report.rows.push_back(row);
    }
  }
  return report;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ValidationError("cannot open for writing: " + path);
  std::fprintf(f, "bin,method,fraction_pct,nmse_db,mean_seq_db,n_sequences\n");
  for (const auto& r : report.rows)
    std::fprintf(f, "%d,%s,%g,%.6f,%.6f,%lld\n", r.bin, r.method.c_str(), r.fraction_pct,
                 r.nmse_db, r.mean_seq_db, static_cast<long long>(r.n_sequences));
  std::fprintf(f, "# config_hash=%s tool_version=%s\n", report.config_hash.c_str(),
               report.tool_version.c_str());
  std::fclose(f);
}

void write_report_json(const EvalReport& report, const std::string& path) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"bin", r.bin},
                    {"method", r.method},
                    {"fraction_pct", r.fraction_pct},
                    {"nmse_db", r.nmse_db},
                    {"mean_seq_db", r.mean_seq_db},
                    {"n_sequences", r.n_sequences}});
  nlohmann::json doc{{"tool_version", report.tool_version},
                     {"config_hash", report.config_hash},
                     {"rows", rows}};
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ValidationError("cannot open for writing: " + path);
  std::string text = doc.dump(2);
  if (std::fwrite(text.data(), 1, text.size(), f) != text.size()) {
    std::fclose(f);
    throw ValidationError("write failed: " + path);
  }
  std::fclose(f);
}

BenchResult bench_attention(const GlobalConfig& cfg, const std::vector<int>& t_frames_list,
                            int64_t dense_limit) {
  BenchResult result;
  const int d = cfg.model.d_model;
  const int gh = 32 / cfg.model.patch_h;
  const int gw = 32 / cfg.model.patch_w;

  for (int t_frames : t_frames_list) {
    AttentionConfig attn = cfg.attention;
    std::erase_if(attn.t_offsets, [&](int m) { return m >= t_frames; });
    NeighborTable table = build_neighbors(t_frames, gh, gw,
                                          neighbor_params(attn, AttnMode::bidirectional),
                                          AttnMode::bidirectional, true);
    int64_t s = table.n_tokens();
    Rng rng(derive_seed(1234, "bench", static_cast<uint64_t>(t_frames)));
    std::vector<double> tokens(static_cast<size_t>(s) * d);
    for (auto& v : tokens) v = rng.normal();
    std::vector<double> wq(static_cast<size_t>(d) * d), wk(wq.size()), wv(wq.size()), wo(wq.size());
    double sigma = std::sqrt(1.0 / d);
    for (auto* m : {&wq, &wk, &wv, &wo})
      for (auto& v : *m) v = sigma * rng.normal();
    AttentionWeights weights{d, cfg.model.heads, cfg.model.rope_base, wq.data(), wk.data(),
                             wv.data(), wo.data()};
    std::vector<double> out(tokens.size());

    auto timed = [&](auto&& fn) {
      auto t0 = std::chrono::steady_clock::now();
      fn();
      auto t1 = std::chrono::steady_clock::now();
      return std::chrono::duration<double, std::milli>(t1 - t0).count();
    };

    double dense_count = static_cast<double>(s) * static_cast<double>(s);

    BenchRow dense_row{s, "dense", s * s, s * s, 0, 0.0, 1.0, true};
    if (s <= dense_limit) {
      AttnStats st;
      dense_row.wall_ms = timed([&] {
        dense_attention_reference(tokens.data(), s, weights, false, nullptr, out.data(), &st);
      });
      dense_row.scores = st.scores_evaluated;
      dense_row.attended = st.edges_attended;
    } else {
      dense_row.measured = false;  // analytic S^2 only
    }
    result.rows.push_back(dense_row);

    {
      AttnStats st;
      RoutingConfig off;
      off.enabled = false;
      double ms = timed(
          [&] { ssta_forward(tokens.data(), s, table, weights, off, out.data(), &st); });
      int64_t analytic = analytic_edges(table, off);
      if (st.edges_attended != analytic) result.self_check_ok = false;
      result.rows.push_back({s, "ssta", st.scores_evaluated, st.edges_attended, st.hub_edges, ms,
                             dense_count / static_cast<double>(st.edges_attended), true});
    }
    {
      AttnStats st;
      double ms = timed([&] {
        ssta_forward(tokens.data(), s, table, weights, cfg.attention.routing, out.data(), &st);
      });
      int64_t analytic = analytic_edges(table, cfg.attention.routing);
      if (st.edges_attended != analytic) result.self_check_ok = false;
      result.rows.push_back({s, "ssta+routing", st.scores_evaluated, st.edges_attended,
                             st.hub_edges, ms,
                             dense_count / static_cast<double>(st.edges_attended), true});
    }
  }
  return result;
}

}  // namespace stcm
