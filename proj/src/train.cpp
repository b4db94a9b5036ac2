#include "stcm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>

namespace stcm {

AdSequence augment(const AdSequence& seq, Rng& rng, const AugmentConfig& cfg) {
  AdSequence out = seq;
  if (!cfg.enabled) return out;

  // Draw decisions and parameters in a fixed order so the stream stays
  // aligned whether or not an augmentation fires.
  bool do_phase = rng.uniform() < cfg.prob && cfg.phase;
  double phase = rng.uniform(0.0, 2.0 * M_PI);
  bool do_amp = rng.uniform() < cfg.prob && cfg.amp;
  double amp = rng.uniform(cfg.amp_min, cfg.amp_max);
  bool do_awgn = rng.uniform() < cfg.prob && cfg.awgn;
  double snr_db = rng.uniform(cfg.snr_min_db, cfg.snr_max_db);

  if (do_phase) {
    std::complex<double> r = std::polar(1.0, phase);
    for (auto& v : out.frames) v *= r;
  }
  if (do_amp) {
    for (auto& v : out.frames) v *= amp;
    out.rms *= amp;
  }
  if (do_awgn) {
    double power = 0.0;
    for (const auto& v : out.frames) power += std::norm(v);
    power /= static_cast<double>(out.frames.size());
    double noise_power = power * std::pow(10.0, -snr_db / 10.0);
    double sigma = std::sqrt(noise_power / 2.0);
    for (auto& v : out.frames) v += std::complex<double>(sigma * rng.normal(), sigma * rng.normal());
  }
  return out;
}

double lr_at(int64_t step, const TrainLoopConfig& cfg) {
  if (cfg.total_steps <= 0) throw ValidationError("lr_at: total_steps must be positive");
  double lr_min = cfg.lr_peak * cfg.lr_min_ratio;
  int64_t warmup = static_cast<int64_t>(std::llround(cfg.warmup_ratio * static_cast<double>(cfg.total_steps)));
  if (warmup > 0 && step < warmup)
    return cfg.lr_peak * static_cast<double>(step) / static_cast<double>(warmup);
  int64_t last = cfg.total_steps - 1;
  if (step >= last) return lr_min;
  double span = static_cast<double>(last - warmup);
  double u = span > 0 ? static_cast<double>(step - warmup) / span : 1.0;
  return lr_min + (cfg.lr_peak - lr_min) * 0.5 * (1.0 + std::cos(M_PI * u));
}

double global_grad_norm(const std::vector<double>& grads) {
  double acc = 0.0;
  for (double g : grads) acc += g * g;
  return std::sqrt(acc);
}

void optimizer_step(ModelState& state, std::vector<double>& grads, AdamState& adam, int64_t step,
                    double lr, const TrainLoopConfig& cfg, const TrainableRange& trainable) {
  if (grads.size() != state.n_params || adam.m.size() != state.n_params)
    throw ValidationError("optimizer_step: shape mismatch");

  double gn = global_grad_norm(grads);
  if (cfg.grad_clip > 0.0 && gn > cfg.grad_clip) {
    double scale = cfg.grad_clip / gn;
    for (double& g : grads) g *= scale;
  }

  double t = static_cast<double>(step + 1);
  double bc1 = 1.0 - std::pow(cfg.beta1, t);
  double bc2 = 1.0 - std::pow(cfg.beta2, t);
  size_t lo = trainable.all ? 0 : trainable.begin;
  size_t hi = trainable.all ? state.n_params : trainable.end;
  for (size_t i = lo; i < hi; ++i) {
    double g = grads[i];
    adam.m[i] = cfg.beta1 * adam.m[i] + (1.0 - cfg.beta1) * g;
    adam.v[i] = cfg.beta2 * adam.v[i] + (1.0 - cfg.beta2) * g * g;
    double mhat = adam.m[i] / bc1;
    double vhat = adam.v[i] / bc2;
    state.params[i] -=
        lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) + cfg.weight_decay * state.params[i]);
  }
}

namespace {

constexpr char kCkptMagic[4] = {'S', 'T', 'C', 'K'};

void fwrite_checked(std::FILE* f, const void* p, size_t n, const std::string& path) {
  if (std::fwrite(p, 1, n, f) != n) throw ValidationError("write failed: " + path);
}

void fread_checked(std::FILE* f, void* p, size_t n, const std::string& path) {
  if (std::fread(p, 1, n, f) != n) throw ValidationError("read failed: " + path);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ValidationError("cannot open for writing: " + path);
  fwrite_checked(f, kCkptMagic, 4, path);
  uint16_t version = 1;
  fwrite_checked(f, &version, sizeof(version), path);
  const ModelConfig& mc = ckpt.state.cfg;
  int32_t dims[6] = {mc.d_model, mc.depth, mc.heads, mc.mlp_ratio, mc.patch_h, mc.patch_w};
  fwrite_checked(f, dims, sizeof(dims), path);
  fwrite_checked(f, &mc.nmse_eps, sizeof(double), path);
  fwrite_checked(f, &mc.rope_base, sizeof(double), path);
  uint64_t step = static_cast<uint64_t>(ckpt.step);
  fwrite_checked(f, &step, sizeof(step), path);
  fwrite_checked(f, &ckpt.seed, sizeof(ckpt.seed), path);
  uint64_t hash_len = ckpt.config_hash.size();
  fwrite_checked(f, &hash_len, sizeof(hash_len), path);
  fwrite_checked(f, ckpt.config_hash.data(), hash_len, path);
  uint64_t n = ckpt.state.n_params;
  fwrite_checked(f, &n, sizeof(n), path);
  fwrite_checked(f, ckpt.state.params.data(), n * sizeof(double), path);
  fwrite_checked(f, ckpt.adam.m.data(), n * sizeof(double), path);
  fwrite_checked(f, ckpt.adam.v.data(), n * sizeof(double), path);
  std::fclose(f);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw ValidationError("cannot open checkpoint: " + path);
  char magic[4];
  fread_checked(f, magic, 4, path);
  if (std::memcmp(magic, kCkptMagic, 4) != 0) {
    std::fclose(f);
    throw ValidationError("bad checkpoint magic: " + path);
  }
  uint16_t version;
  fread_checked(f, &version, sizeof(version), path);
  if (version != 1) {
    std::fclose(f);
    throw ValidationError("unsupported checkpoint version: " + path);
  }
  int32_t dims[6];
  fread_checked(f, dims, sizeof(dims), path);
  ModelConfig mc;
  mc.d_model = dims[0];
  mc.depth = dims[1];
  mc.heads = dims[2];
  mc.mlp_ratio = dims[3];
  mc.patch_h = dims[4];
  mc.patch_w = dims[5];
  fread_checked(f, &mc.nmse_eps, sizeof(double), path);
  fread_checked(f, &mc.rope_base, sizeof(double), path);
  Checkpoint ckpt;
  uint64_t step;
  fread_checked(f, &step, sizeof(step), path);
  ckpt.step = static_cast<int64_t>(step);
  fread_checked(f, &ckpt.seed, sizeof(ckpt.seed), path);
  uint64_t hash_len;
  fread_checked(f, &hash_len, sizeof(hash_len), path);
  ckpt.config_hash.resize(hash_len);
  fread_checked(f, ckpt.config_hash.data(), hash_len, path);
  uint64_t n;
  fread_checked(f, &n, sizeof(n), path);
  ckpt.state = model_shape(mc);
  if (n != ckpt.state.n_params) {
    std::fclose(f);
    throw ValidationError("checkpoint parameter count mismatch: " + path);
  }
  ckpt.adam = AdamState(n);
  fread_checked(f, ckpt.state.params.data(), n * sizeof(double), path);
  fread_checked(f, ckpt.adam.m.data(), n * sizeof(double), path);
  fread_checked(f, ckpt.adam.v.data(), n * sizeof(double), path);
  std::fclose(f);
  return ckpt;
}

uint64_t file_hash(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw ValidationError("cannot open: " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) h = fnv1a64(buf, n, h);
  std::fclose(f);
  return h;
}

PretrainResult pretrain(const std::vector<AdSequence>& train_set, const GlobalConfig& cfg,
                        const std::string& out_dir,
                        const std::optional<std::string>& resume_path,
                        std::vector<LogRow>* log_rows) {
  if (train_set.empty()) throw ValidationError("pretrain: dataset is empty");
  const TrainLoopConfig& loop = cfg.train;
  const int t_frames = train_set.front().t_frames;
  const int h = train_set.front().h;
  const int w = train_set.front().w;
  for (const auto& s : train_set)
    if (s.t_frames != t_frames || s.h != h || s.w != w)
      throw ValidationError("pretrain: all sequences must share dimensions");

  const int gh = h / cfg.model.patch_h;
  const int gw = w / cfg.model.patch_w;
  NeighborTable table = build_neighbors(t_frames, gh, gw,
                                        neighbor_params(cfg.attention, AttnMode::bidirectional),
                                        AttnMode::bidirectional, /*include_cls=*/true);

  std::filesystem::create_directories(out_dir);
  std::string hash = config_hash(cfg);

  ModelState state = init_model(cfg.model, cfg.seed);
  AdamState adam(state.n_params);
  int64_t start_step = 0;
  if (resume_path) {
    Checkpoint ckpt = load_checkpoint(*resume_path);
    if (ckpt.state.n_params != state.n_params)
      throw ValidationError("resume: checkpoint does not match the model config");
    state = std::move(ckpt.state);
    adam = std::move(ckpt.adam);
    start_step = ckpt.step;
  }

  std::string log_path = out_dir + "/train_log.csv";
  std::FILE* log = std::fopen(log_path.c_str(), start_step > 0 ? "ab" : "wb");
  if (!log) throw ValidationError("cannot open for writing: " + log_path);
  if (start_step == 0) std::fprintf(log, "step,loss,rho,lr,mode\n");

  const int batch = loop.batch_size;
  const int threads = resolve_threads(loop.n_threads);
  std::vector<std::vector<double>> item_grads(static_cast<size_t>(batch));
  std::vector<double> item_loss(static_cast<size_t>(batch));
  for (auto& g : item_grads) g.assign(state.n_params, 0.0);
  std::vector<double> grads(state.n_params);
  MaskDims dims{t_frames, gh, gw};

  PretrainResult result;
  for (int64_t step = start_step; step < loop.total_steps; ++step) {
    double rho = curriculum_rho(step, loop.total_steps, cfg.mask.curriculum);
    double lr = lr_at(step, loop);
    Rng mode_rng(derive_seed(cfg.seed, "maskmode", static_cast<uint64_t>(step)));
    MaskMode mode = sample_mode(mode_rng, cfg.mask.mix_weights);
    Rng batch_rng(derive_seed(cfg.seed, "batch", static_cast<uint64_t>(step)));
    std::vector<int64_t> picks(static_cast<size_t>(batch));
    for (auto& p : picks) p = batch_rng.below(static_cast<int64_t>(train_set.size()));

    parallel_for(batch, threads, [&](int64_t item) {
      uint64_t tag = static_cast<uint64_t>(step) * static_cast<uint64_t>(batch) +
                     static_cast<uint64_t>(item);
      Rng rng_aug(derive_seed(cfg.seed, "augment", tag));
      Rng rng_mask(derive_seed(cfg.seed, "mask", tag));
      AdSequence seq = rms_normalize(train_set[static_cast<size_t>(picks[static_cast<size_t>(item)])]);
      seq = augment(seq, rng_aug, loop.augment);
      MaskGrid mask = generate_mask(mode, dims, rho, rng_mask, cfg.mask);
      std::fill(item_grads[static_cast<size_t>(item)].begin(),
                item_grads[static_cast<size_t>(item)].end(), 0.0);
      item_loss[static_cast<size_t>(item)] =
          recon_loss_and_grads(state, seq, mask, table, cfg.attention.routing,
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
      throw NumericError("non-finite loss at step " + std::to_string(step));

    optimizer_step(state, grads, adam, step, lr, loop);

    std::fprintf(log, "%lld,%.9g,%.4f,%.6g,%s\n", static_cast<long long>(step), loss, rho, lr,
                 mask_mode_name(mode));
    if (log_rows) log_rows->push_back({step, loss, rho, lr, mode});
    result.loss_log.push_back(loss);

    if (loop.ckpt_interval > 0 && (step + 1) % loop.ckpt_interval == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "/ckpt_step%lld.bin", static_cast<long long>(step + 1));
      save_checkpoint(out_dir + name, {state, adam, step + 1, cfg.seed, hash});
    }
  }
  std::fclose(log);

  result.state = std::move(state);
  result.adam = std::move(adam);
  result.steps_run = loop.total_steps - start_step;
  result.final_checkpoint = out_dir + "/ckpt_final.bin";
  save_checkpoint(result.final_checkpoint,
                  {result.state, result.adam, loop.total_steps, cfg.seed, hash});
  return result;
}

double eval_masked_nmse_db(const ModelState& state, const std::vector<AdSequence>& seqs,
                           double rho, const GlobalConfig& cfg, uint64_t seed) {
  if (seqs.empty()) throw ValidationError("eval_masked_nmse_db: no sequences");
  const int gh = seqs.front().h / cfg.model.patch_h;
  const int gw = seqs.front().w / cfg.model.patch_w;
  const int t_frames = seqs.front().t_frames;
  NeighborTable table = build_neighbors(t_frames, gh, gw,
                                        neighbor_params(cfg.attention, AttnMode::bidirectional),
                                        AttnMode::bidirectional, true);
  MaskDims dims{t_frames, gh, gw};
  double acc = 0.0;
  for (size_t i = 0; i < seqs.size(); ++i) {
    Rng rng(derive_seed(seed, "eval-mask", i));
    MaskMode mode = sample_mode(rng, cfg.mask.mix_weights);
    MaskGrid mask = generate_mask(mode, dims, rho, rng, cfg.mask);
    AdSequence seq = rms_normalize(seqs[i]);
    acc += recon_loss_and_grads(state, seq, mask, table, cfg.attention.routing, nullptr);
  }
  return 10.0 * std::log10(acc / static_cast<double>(seqs.size()));
}

}  // namespace stcm
