#include "stcm/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace stcm {

using nlohmann::json;

std::vector<int> expand_offsets(const std::vector<int>& magnitudes, AttnMode mode) {
  std::vector<int> out;
  for (int m : magnitudes) {
    if (m <= 0) throw ValidationError("attention offsets must be positive magnitudes");
    out.push_back(-m);
    if (mode == AttnMode::bidirectional) out.push_back(m);
  }
  std::sort(out.begin(), out.end());
  return out;
}

NeighborParams neighbor_params(const AttentionConfig& cfg, AttnMode mode) {
  NeighborParams p;
  p.r_h = cfg.r_h;
  p.r_w = cfg.r_w;
  p.gamma_h = cfg.gamma_h;
  p.gamma_w = cfg.gamma_w;
  p.t_offsets = expand_offsets(cfg.t_offsets, mode);
  return p;
}

namespace {

json to_json(const GlobalConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["scene"] = {{"extent_m", {c.scene.extent_x, c.scene.extent_y}},
                {"d_grid_m", c.scene.d_grid},
                {"road_block_m", c.scene.road_block_m},
                {"reflectors", {c.scene.min_reflectors, c.scene.max_reflectors}},
                {"blockers", {c.scene.min_blockers, c.scene.max_blockers}},
                {"reflection_loss", {c.scene.refl_loss_min, c.scene.refl_loss_max}},
                {"l_max", c.scene.l_max},
                {"fc_hz", c.scene.fc},
                {"bandwidth_hz", c.scene.bandwidth},
                {"n_antennas", c.scene.n_ant},
                {"n_subcarriers", c.scene.n_sub},
                {"t_frames", c.scene.t_frames},
                {"dt_s", c.scene.dt},
                {"speed_range_mps", {c.scene.speed_min, c.scene.speed_max}},
                {"scene_seed", c.scene.scene_seed}};
  j["adt"] = {{"delay_taps", c.adt.delay_taps}};
  j["mask"] = {{"mix_weights", c.mask.mix_weights},
               {"rho_start", c.mask.curriculum.rho_start},
               {"rho_end", c.mask.curriculum.rho_end},
               {"ramp_fraction", c.mask.curriculum.ramp_fraction},
               {"rect_kh", {c.mask.rect.kh_min, c.mask.rect.kh_max}},
               {"rect_kw", {c.mask.rect.kw_min, c.mask.rect.kw_max}},
               {"tube_r", {c.mask.tube.r_h, c.mask.tube.r_w}},
               {"tube_drift", {c.mask.tube.delta_h, c.mask.tube.delta_w}},
               {"comb_st", c.mask.comb.st_choices},
               {"comb_sw", c.mask.comb.sw_choices}};
  j["attention"] = {{"r_h", c.attention.r_h},
                    {"r_w", c.attention.r_w},
                    {"t_offsets", c.attention.t_offsets},
                    {"gamma_h", c.attention.gamma_h},
                    {"gamma_w", c.attention.gamma_w},
                    {"routing_enabled", c.attention.routing.enabled},
                    {"routing_fraction", c.attention.routing.fraction},
                    {"k_min", c.attention.routing.k_min},
                    {"k_max", c.attention.routing.k_max}};
  j["model"] = {{"d_model", c.model.d_model},
                {"depth", c.model.depth},
                {"heads", c.model.heads},
                {"mlp_ratio", c.model.mlp_ratio},
                {"patch", {c.model.patch_h, c.model.patch_w}},
                {"nmse_eps", c.model.nmse_eps},
                {"rope_base", c.model.rope_base}};
  j["train"] = {{"lr_peak", c.train.lr_peak},
                {"lr_min_ratio", c.train.lr_min_ratio},
                {"weight_decay", c.train.weight_decay},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"adam_eps", c.train.adam_eps},
                {"grad_clip", c.train.grad_clip},
                {"warmup_ratio", c.train.warmup_ratio},
                {"total_steps", c.train.total_steps},
                {"batch_size", c.train.batch_size},
                {"n_threads", c.train.n_threads},
                {"ckpt_interval", c.train.ckpt_interval},
                {"augment_enabled", c.train.augment.enabled},
                {"augment_prob", c.train.augment.prob},
                {"augment_phase", c.train.augment.phase},
                {"augment_amp", c.train.augment.amp},
                {"augment_awgn", c.train.augment.awgn},
                {"amp_range", {c.train.augment.amp_min, c.train.augment.amp_max}},
                {"snr_range_db", {c.train.augment.snr_min_db, c.train.augment.snr_max_db}}};
  j["eval"] = {{"past_frames", c.eval.past_frames},
               {"fractions_pct", c.eval.fractions_pct},
               {"bin_edges_mps", c.eval.bin_edges},
               {"ft_steps", c.eval.ft_steps},
               {"ft_lr", c.eval.ft_lr},
               {"ft_batch", c.eval.ft_batch},
               {"calib_sequences", c.eval.calib_sequences},
               {"clamp_db", c.eval.clamp_db}};
  return j;
}

void check_unknown_keys(const json& input, const json& schema, const std::string& path) {
  if (!input.is_object()) return;
  for (auto it = input.begin(); it != input.end(); ++it) {
    std::string here = path.empty() ? it.key() : path + "." + it.key();
    if (!schema.contains(it.key()))
      throw ValidationError("unknown config key: " + here);
    if (it.value().is_object()) check_unknown_keys(it.value(), schema.at(it.key()), here);
  }
}

template <class T>
void get_to(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ValidationError("bad value for " + section + "." + key + ": " + e.what());
  }
}

void get_pair(const json& j, const char* key, double& a, double& b, const std::string& section) {
  if (!j.contains(key)) return;
  std::vector<double> v;
  get_to(j, key, v, section);
  if (v.size() != 2) throw ValidationError(section + "." + std::string(key) + " needs 2 entries");
  a = v[0];
  b = v[1];
}

void get_pair(const json& j, const char* key, int& a, int& b, const std::string& section) {
  if (!j.contains(key)) return;
  std::vector<int> v;
  get_to(j, key, v, section);
  if (v.size() != 2) throw ValidationError(section + "." + std::string(key) + " needs 2 entries");
  a = v[0];
  b = v[1];
}

GlobalConfig from_json(const json& j) {
  GlobalConfig c;
  check_unknown_keys(j, to_json(c), "");

  get_to(j, "seed", c.seed, "");
  if (j.contains("scene")) {
    const json& s = j.at("scene");
    get_pair(s, "extent_m", c.scene.extent_x, c.scene.extent_y, "scene");
    get_to(s, "d_grid_m", c.scene.d_grid, "scene");
    get_to(s, "road_block_m", c.scene.road_block_m, "scene");
    get_pair(s, "reflectors", c.scene.min_reflectors, c.scene.max_reflectors, "scene");
    get_pair(s, "blockers", c.scene.min_blockers, c.scene.max_blockers, "scene");
    get_pair(s, "reflection_loss", c.scene.refl_loss_min, c.scene.refl_loss_max, "scene");
    get_to(s, "l_max", c.scene.l_max, "scene");
    get_to(s, "fc_hz", c.scene.fc, "scene");
    get_to(s, "bandwidth_hz", c.scene.bandwidth, "scene");
    get_to(s, "n_antennas", c.scene.n_ant, "scene");
    get_to(s, "n_subcarriers", c.scene.n_sub, "scene");
    get_to(s, "t_frames", c.scene.t_frames, "scene");
    get_to(s, "dt_s", c.scene.dt, "scene");
    get_pair(s, "speed_range_mps", c.scene.speed_min, c.scene.speed_max, "scene");
    get_to(s, "scene_seed", c.scene.scene_seed, "scene");
  }
  if (j.contains("adt")) get_to(j.at("adt"), "delay_taps", c.adt.delay_taps, "adt");
  if (j.contains("mask")) {
    const json& m = j.at("mask");
    get_to(m, "mix_weights", c.mask.mix_weights, "mask");
    get_to(m, "rho_start", c.mask.curriculum.rho_start, "mask");
    get_to(m, "rho_end", c.mask.curriculum.rho_end, "mask");
    get_to(m, "ramp_fraction", c.mask.curriculum.ramp_fraction, "mask");
    get_pair(m, "rect_kh", c.mask.rect.kh_min, c.mask.rect.kh_max, "mask");
    get_pair(m, "rect_kw", c.mask.rect.kw_min, c.mask.rect.kw_max, "mask");
    get_pair(m, "tube_r", c.mask.tube.r_h, c.mask.tube.r_w, "mask");
    get_pair(m, "tube_drift", c.mask.tube.delta_h, c.mask.tube.delta_w, "mask");
    get_to(m, "comb_st", c.mask.comb.st_choices, "mask");
    get_to(m, "comb_sw", c.mask.comb.sw_choices, "mask");
  }
  if (j.contains("attention")) {
    const json& a = j.at("attention");
    get_to(a, "r_h", c.attention.r_h, "attention");
    get_to(a, "r_w", c.attention.r_w, "attention");
    get_to(a, "t_offsets", c.attention.t_offsets, "attention");
    get_to(a, "gamma_h", c.attention.gamma_h, "attention");
    get_to(a, "gamma_w", c.attention.gamma_w, "attention");
    get_to(a, "routing_enabled", c.attention.routing.enabled, "attention");
    get_to(a, "routing_fraction", c.attention.routing.fraction, "attention");
    get_to(a, "k_min", c.attention.routing.k_min, "attention");
    get_to(a, "k_max", c.attention.routing.k_max, "attention");
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    get_to(m, "d_model", c.model.d_model, "model");
    get_to(m, "depth", c.model.depth, "model");
    get_to(m, "heads", c.model.heads, "model");
    get_to(m, "mlp_ratio", c.model.mlp_ratio, "model");
    get_pair(m, "patch", c.model.patch_h, c.model.patch_w, "model");
    get_to(m, "nmse_eps", c.model.nmse_eps, "model");
    get_to(m, "rope_base", c.model.rope_base, "model");
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    get_to(t, "lr_peak", c.train.lr_peak, "train");
    get_to(t, "lr_min_ratio", c.train.lr_min_ratio, "train");
    get_to(t, "weight_decay", c.train.weight_decay, "train");
    get_to(t, "beta1", c.train.beta1, "train");
    get_to(t, "beta2", c.train.beta2, "train");
    get_to(t, "adam_eps", c.train.adam_eps, "train");
    get_to(t, "grad_clip", c.train.grad_clip, "train");
    get_to(t, "warmup_ratio", c.train.warmup_ratio, "train");
    get_to(t, "total_steps", c.train.total_steps, "train");
    get_to(t, "batch_size", c.train.batch_size, "train");
    get_to(t, "n_threads", c.train.n_threads, "train");
    get_to(t, "ckpt_interval", c.train.ckpt_interval, "train");
    get_to(t, "augment_enabled", c.train.augment.enabled, "train");
    get_to(t, "augment_prob", c.train.augment.prob, "train");
    get_to(t, "augment_phase", c.train.augment.phase, "train");
    get_to(t, "augment_amp", c.train.augment.amp, "train");
    get_to(t, "augment_awgn", c.train.augment.awgn, "train");
    get_pair(t, "amp_range", c.train.augment.amp_min, c.train.augment.amp_max, "train");
    get_pair(t, "snr_range_db", c.train.augment.snr_min_db, c.train.augment.snr_max_db, "train");
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    get_to(e, "past_frames", c.eval.past_frames, "eval");
    get_to(e, "fractions_pct", c.eval.fractions_pct, "eval");
    get_to(e, "bin_edges_mps", c.eval.bin_edges, "eval");
    get_to(e, "ft_steps", c.eval.ft_steps, "eval");
    get_to(e, "ft_lr", c.eval.ft_lr, "eval");
    get_to(e, "ft_batch", c.eval.ft_batch, "eval");
    get_to(e, "calib_sequences", c.eval.calib_sequences, "eval");
    get_to(e, "clamp_db", c.eval.clamp_db, "eval");
  }
  return c;
}

}  // namespace

GlobalConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config parse error: ") + e.what());
  }
  return from_json(j);
}

GlobalConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

std::string config_to_json(const GlobalConfig& cfg) { return to_json(cfg).dump(2); }

std::string config_hash(const GlobalConfig& cfg) {
  // n_threads is an execution detail: results are bit-identical across thread
  // counts, so it must not change the digest.
  GlobalConfig canonical_cfg = cfg;
  canonical_cfg.train.n_threads = 0;
  std::string canonical = to_json(canonical_cfg).dump();
  return hex64(fnv1a64(canonical));
}

}  // namespace stcm
