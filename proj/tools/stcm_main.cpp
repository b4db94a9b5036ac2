// stcm: spatiotemporal channel modeling at desk scale.
// Commands: generate, pretrain, finetune, eval, bench-attn.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "stcm/config.hpp"
#include "stcm/dataset_io.hpp"
#include "stcm/downstream.hpp"
#include "stcm/train.hpp"

namespace {

using namespace stcm;

GlobalConfig load_with_overrides(const std::string& config_path, std::optional<uint64_t> seed,
                                 bool deterministic) {
  GlobalConfig cfg = config_path.empty() ? GlobalConfig{} : load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (deterministic) cfg.train.n_threads = 1;
  return cfg;
}

int cmd_generate(const std::string& config_path, std::optional<uint64_t> seed, bool deterministic,
                 const std::string& out, int64_t n) {
  GlobalConfig cfg = load_with_overrides(config_path, seed, deterministic);
  SceneConfig scene = cfg.scene;
  scene.scene_seed = derive_seed(cfg.seed, "scene-layout", cfg.scene.scene_seed);
  auto summary = generate_dataset(n, scene, cfg.adt.delay_taps, cfg.eval.bin_edges, cfg.seed, out,
                                  config_hash(cfg), cfg.train.n_threads);
  std::printf("wrote %llu sequences to %s (manifest %s)\n",
              static_cast<unsigned long long>(summary.n_sequences), summary.dataset_path.c_str(),
              summary.manifest_path.c_str());
  return 0;
}

int cmd_pretrain(const std::string& config_path, std::optional<uint64_t> seed, bool deterministic,
                 const std::string& dataset, const std::string& out_dir,
                 std::optional<int64_t> steps, std::optional<std::string> resume) {
  GlobalConfig cfg = load_with_overrides(config_path, seed, deterministic);
  if (steps) cfg.train.total_steps = *steps;
  DatasetReader reader(dataset);
  std::vector<AdSequence> train_set = reader.read_all();

  if (cfg.train.total_steps == 0) {
    // init-only checkpoint
    std::filesystem::create_directories(out_dir);
    ModelState state = init_model(cfg.model, cfg.seed);
    AdamState adam(state.n_params);
    std::string path = out_dir + "/ckpt_final.bin";
    save_checkpoint(path, {state, adam, 0, cfg.seed, config_hash(cfg)});
    std::printf("wrote init checkpoint %s\n", path.c_str());
    return 0;
  }

  PretrainResult result = pretrain(train_set, cfg, out_dir,
                                   resume ? std::optional<std::string>(*resume) : std::nullopt);
  std::printf("final loss %.6g after %lld steps; checkpoint %s (hash %s)\n",
              result.loss_log.empty() ? 0.0 : result.loss_log.back(),
              static_cast<long long>(cfg.train.total_steps), result.final_checkpoint.c_str(),
              hex64(file_hash(result.final_checkpoint)).c_str());
  return 0;
}

std::vector<double> parse_fractions(const std::string& csv) {
  std::vector<double> out;
  size_t pos = 0;
  while (pos < csv.size()) {
    size_t next = csv.find(',', pos);
    if (next == std::string::npos) next = csv.size();
    out.push_back(std::stod(csv.substr(pos, next - pos)));
    pos = next + 1;
  }
  return out;
}

int cmd_finetune(const std::string& config_path, std::optional<uint64_t> seed, bool deterministic,
                 const std::string& checkpoint, const std::string& dataset,
                 const std::string& fractions_csv, const std::string& out_dir) {
  GlobalConfig cfg = load_with_overrides(config_path, seed, deterministic);
  std::vector<double> fractions =
      fractions_csv.empty() ? cfg.eval.fractions_pct : parse_fractions(fractions_csv);
  Checkpoint ckpt = load_checkpoint(checkpoint);
  DatasetReader reader(dataset);
  std::vector<AdSequence> train_seqs = reader.read_all();
  std::filesystem::create_directories(out_dir);
  for (double pct : fractions) {
    FinetuneOptions opt;
    opt.fraction = pct / 100.0;
    opt.seed = derive_seed(cfg.seed, "finetune", static_cast<uint64_t>(std::llround(pct * 100)));
    ModelState tuned = finetune_predictor(ckpt.state, train_seqs, opt, cfg);
    char name[64];
    std::snprintf(name, sizeof(name), "/ft_%g.bin", pct);
    save_checkpoint(out_dir + name,
                    {tuned, AdamState(tuned.n_params), 0, cfg.seed, config_hash(cfg)});
    std::printf("fine-tuned at %g%% -> %s%s\n", pct, out_dir.c_str(), name);
  }
  return 0;
}

int cmd_eval(const std::string& config_path, std::optional<uint64_t> seed, bool deterministic,
             const std::string& checkpoint, const std::string& finetuned_dir,
             const std::string& dataset, const std::string& fractions_csv,
             const std::string& out_prefix) {
  GlobalConfig cfg = load_with_overrides(config_path, seed, deterministic);
  std::vector<double> fractions =
      fractions_csv.empty() ? cfg.eval.fractions_pct : parse_fractions(fractions_csv);
  DatasetReader reader(dataset);
  std::vector<AdSequence> test_set = reader.read_all();

  std::vector<ModelState> storage;
  storage.reserve(fractions.size() + 2);
  std::vector<EvalModel> models;

  Checkpoint base = load_checkpoint(checkpoint);
  // zero-shot with a freshly initialized head, reported for transparency
  ModelState random_head = base.state;
  {
    ModelState fresh = init_model(random_head.cfg, derive_seed(cfg.seed, "zero-shot-head"));
    std::copy(fresh.params.begin() + static_cast<long>(fresh.off_pred_w), fresh.params.end(),
              random_head.params.begin() + static_cast<long>(random_head.off_pred_w));
  }
  storage.push_back(std::move(random_head));
  models.push_back({"zero_shot_random_head", -1.0, &storage.back()});

  for (double pct : fractions) {
    char name[64];
    std::snprintf(name, sizeof(name), "/ft_%g.bin", pct);
    std::string path = finetuned_dir + name;
    if (!std::filesystem::exists(path)) {
      std::fprintf(stderr, "skipping %g%%: %s not found\n", pct, path.c_str());
      continue;
    }
    storage.push_back(load_checkpoint(path).state);
    std::string method = pct == 0.0 ? "frozen_head_fit" : "finetuned";
    models.push_back({method, pct, &storage.back()});
  }

  EvalReport report = evaluate(models, test_set, cfg);
  write_report_csv(report, out_prefix + ".csv");
  write_report_json(report, out_prefix + ".json");
  for (const auto& r : report.rows)
    std::printf("bin=%d method=%s fraction=%g%% nmse=%.3f dB (n=%lld)\n", r.bin, r.method.c_str(),
                r.fraction_pct, r.nmse_db, static_cast<long long>(r.n_sequences));
  std::printf("report written to %s.csv / %s.json\n", out_prefix.c_str(), out_prefix.c_str());
  return 0;
}

int cmd_bench_attn(const std::string& config_path, std::optional<uint64_t> seed,
                   bool deterministic, int64_t dense_limit) {
  GlobalConfig cfg = load_with_overrides(config_path, seed, deterministic);
  BenchResult bench = bench_attention(cfg, {1, 5, 20}, dense_limit);
  std::printf("%8s %14s %12s %12s %8s %10s %10s\n", "S", "method", "scores", "attended", "hub",
              "wall_ms", "vs_dense");
  for (const auto& r : bench.rows)
    std::printf("%8lld %14s %12lld %12lld %8lld %10.2f %9.1fx%s\n", static_cast<long long>(r.s),
                r.method.c_str(), static_cast<long long>(r.scores),
                static_cast<long long>(r.attended), static_cast<long long>(r.hub),
                r.measured ? r.wall_ms : 0.0, r.ratio_vs_dense, r.measured ? "" : " (analytic)");
  if (!bench.self_check_ok) {
    std::fprintf(stderr, "self-check failed: measured counts do not match the analytic bound\n");
    return 3;
  }
  // the headline claim: routed SSTA at the largest size must be >= 10x below dense
  for (const auto& r : bench.rows)
    if (r.method == "ssta+routing" && r.ratio_vs_dense < 10.0) {
      std::fprintf(stderr, "self-check failed: routed attention is not 10x below dense\n");
      return 3;
    }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatiotemporal channel modeling toolkit"};
  app.require_subcommand(1);

  std::string config_path, out, dataset, checkpoint, finetuned_dir, fractions;
  std::optional<uint64_t> seed;
  bool deterministic = false;
  int64_t n = 100;
  std::optional<int64_t> steps;
  std::optional<std::string> resume;
  int64_t dense_limit = 6000;

  app.add_option("--config", config_path, "config file (JSON)");
  app.add_option("--seed", seed, "root seed override");
  app.add_flag("--deterministic", deterministic, "single-threaded strict determinism");

  auto* gen = app.add_subcommand("generate", "synthesize a channel sequence dataset");
  gen->add_option("--out", out, "output dataset path")->required();
  gen->add_option("--n", n, "number of sequences");

  auto* pre = app.add_subcommand("pretrain", "masked-channel pretraining");
  pre->add_option("--dataset", dataset, "training dataset")->required();
  pre->add_option("--out", out, "output directory")->required();
  pre->add_option("--steps", steps, "override train.total_steps");
  pre->add_option("--resume", resume, "resume from checkpoint");

  auto* ft = app.add_subcommand("finetune", "fine-tune the one-step predictor");
  ft->add_option("--checkpoint", checkpoint, "pretrained checkpoint")->required();
  ft->add_option("--dataset", dataset, "fine-tuning dataset")->required();
  ft->add_option("--fractions", fractions, "percent list, e.g. 0,1,2,10,50,100");
  ft->add_option("--out", out, "output directory")->required();

  auto* ev = app.add_subcommand("eval", "channel-prediction evaluation");
  ev->add_option("--checkpoint", checkpoint, "pretrained checkpoint")->required();
  ev->add_option("--finetuned", finetuned_dir, "directory with ft_<pct>.bin checkpoints");
  ev->add_option("--dataset", dataset, "held-out test dataset")->required();
  ev->add_option("--fractions", fractions, "percent list to evaluate");
  ev->add_option("--out", out, "report path prefix")->required();

  auto* bench = app.add_subcommand("bench-attn", "attention cost accounting");
  bench->add_option("--dense-limit", dense_limit, "max tokens for a timed dense run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage errors always exit 1
  }

  try {
    if (gen->parsed()) return cmd_generate(config_path, seed, deterministic, out, n);
    if (pre->parsed())
      return cmd_pretrain(config_path, seed, deterministic, dataset, out, steps, resume);
    if (ft->parsed())
      return cmd_finetune(config_path, seed, deterministic, checkpoint, dataset, fractions, out);
    if (ev->parsed())
      return cmd_eval(config_path, seed, deterministic, checkpoint, finetuned_dir, dataset,
                      fractions, out);
    if (bench->parsed()) return cmd_bench_attn(config_path, seed, deterministic, dense_limit);
  } catch (const stcm::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const stcm::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
