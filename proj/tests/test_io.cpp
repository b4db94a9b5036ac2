#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "stcm/config.hpp"
#include "stcm/dataset_io.hpp"

using namespace stcm;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

AdSequence f32_friendly_sequence(int t, int h, int w, uint64_t seed) {
  AdSequence s;
  s.t_frames = t;
  s.h = h;
  s.w = w;
  s.frames.resize(static_cast<size_t>(t) * h * w);
  Rng rng(seed);
  for (auto& v : s.frames) {
    // round-trippable through f32
    v = {static_cast<double>(static_cast<float>(rng.normal())),
         static_cast<double>(static_cast<float>(rng.normal()))};
  }
  s.meta.velocity = {rng.uniform(0, 30), 0.0};
  s.meta.fc = 3.5e9;
  s.meta.dt = 1e-3;
  return s;
}

}  // namespace

TEST_CASE("dataset file round-trips bit exactly") {
  DatasetHeader header;
  header.t = 3;
  header.n = 8;
  header.m = 16;
  header.h = 8;
  header.w = 8;
  header.fc = 3.5e9;
  header.dt = 1e-3;
  header.n_sequences = 4;

  std::vector<AdSequence> seqs;
  for (int i = 0; i < 4; ++i) seqs.push_back(f32_friendly_sequence(3, 8, 8, 10 + static_cast<uint64_t>(i)));

  std::string path = temp_path("stcm_roundtrip.adtd");
  {
    DatasetWriter w(path, header);
    for (const auto& s : seqs) w.append(s);
    w.close();
  }
  DatasetReader r(path);
  CHECK(r.header().t == 3);
  CHECK(r.header().h == 8);
  CHECK(r.header().n_sequences == 4);
  for (int i = 0; i < 4; ++i) {
    AdSequence back = r.read(static_cast<uint64_t>(i));
    CHECK(back.frames == seqs[static_cast<size_t>(i)].frames);
    CHECK(back.meta.velocity.x == seqs[static_cast<size_t>(i)].meta.velocity.x);
  }
}

TEST_CASE("reader rejects wrong magic, version, and truncated payloads") {
  DatasetHeader header;
  header.t = 1;
  header.n = 2;
  header.m = 2;
  header.h = 2;
  header.w = 2;
  header.n_sequences = 1;
  std::string path = temp_path("stcm_broken.adtd");
  {
    DatasetWriter w(path, header);
    w.append(f32_friendly_sequence(1, 2, 2, 3));
    w.close();
  }

  // truncated payload
  std::string trunc = temp_path("stcm_trunc.adtd");
  {
    std::ifstream in(path, std::ios::binary);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(trunc, std::ios::binary);
    out.write(data.data(), static_cast<long>(data.size() - 8));
  }
  CHECK_THROWS_WITH_AS(DatasetReader{trunc}, doctest::Contains("payload length mismatch"),
                       ValidationError);

  // wrong magic
  std::string badmagic = temp_path("stcm_badmagic.adtd");
  {
    std::ifstream in(path, std::ios::binary);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    data[0] = 'X';
    std::ofstream out(badmagic, std::ios::binary);
    out.write(data.data(), static_cast<long>(data.size()));
  }
  CHECK_THROWS_WITH_AS(DatasetReader{badmagic}, doctest::Contains("magic"), ValidationError);

  // byte-swapped version reads as big-endian output
  std::string badver = temp_path("stcm_badver.adtd");
  {
    std::ifstream in(path, std::ios::binary);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::swap(data[4], data[5]);
    std::ofstream out(badver, std::ios::binary);
    out.write(data.data(), static_cast<long>(data.size()));
  }
  CHECK_THROWS_WITH_AS(DatasetReader{badver}, doctest::Contains("version"), ValidationError);
}

TEST_CASE("velocity bins partition the range") {
  std::vector<double> edges{0, 10, 20, 30};
  CHECK(velocity_bin(0.0, edges) == 0);
  CHECK(velocity_bin(9.999, edges) == 0);
  CHECK(velocity_bin(10.0, edges) == 1);
  CHECK(velocity_bin(19.999, edges) == 1);
  CHECK(velocity_bin(20.0, edges) == 2);
  CHECK(velocity_bin(29.999, edges) == 2);
  CHECK(velocity_bin(35.0, edges) == 2);  // clamped into the last bin
}

TEST_CASE("generate_dataset writes consistent files and manifests") {
  SceneConfig scene;
  scene.extent_x = 30;
  scene.extent_y = 30;
  scene.n_ant = 8;
  scene.n_sub = 16;
  scene.t_frames = 4;
  scene.scene_seed = 11;
  std::string path = temp_path("stcm_gen.adtd");
  auto summary = generate_dataset(10, scene, 8, {0, 10, 20, 30}, 21, path, "cafebabe", 2);
  CHECK(summary.n_sequences == 10);

  DatasetReader r(path);
  CHECK(r.header().n_sequences == 10);
  CHECK(r.header().t == 4);
  CHECK(r.header().h == 8);
  CHECK(r.header().w == 8);
  CHECK(r.header().m == 16);

  std::ifstream min(summary.manifest_path);
  REQUIRE(min.good());
  nlohmann::json manifest = nlohmann::json::parse(min);
  CHECK(manifest["config_hash"] == "cafebabe");
  CHECK(manifest["sequences"].size() == 10);
  for (const auto& row : manifest["sequences"]) {
    double speed = row["speed_mps"].get<double>();
    int bin = row["bin"].get<int>();
    CHECK(bin == velocity_bin(speed, {0, 10, 20, 30}));
  }

  // disjoint seed ranges produce entirely distinct sequences
  std::string path2 = temp_path("stcm_gen2.adtd");
  generate_dataset(10, scene, 8, {0, 10, 20, 30}, 9999, path2, "cafebabe", 2);
  DatasetReader r2(path2);
  for (uint64_t i = 0; i < 10; ++i)
    for (uint64_t j = 0; j < 10; ++j) CHECK(r.read(i).frames != r2.read(j).frames);
}

TEST_CASE("config defaults carry the shipped default hyperparameters") {
  GlobalConfig cfg;
  CHECK(cfg.model.depth == 12);
  CHECK(cfg.model.heads == 8);
  CHECK(cfg.model.d_model == 32);
  CHECK(cfg.model.mlp_ratio == 4);
  CHECK(cfg.model.patch_h == 1);
  CHECK(cfg.model.patch_w == 1);
  CHECK(cfg.mask.curriculum.rho_end == 0.60);
  CHECK(cfg.attention.r_h == 1);  // 3x3 same-frame window
  CHECK(cfg.attention.r_w == 1);
  CHECK(cfg.attention.t_offsets == std::vector<int>{1, 2, 3, 4});
  CHECK(cfg.attention.routing.k_max == 64);
  CHECK(cfg.attention.routing.fraction == 0.2);
  CHECK(cfg.train.grad_clip == 1.0);
  CHECK(cfg.train.warmup_ratio == 0.1);
  CHECK(cfg.scene.fc == 3.5e9);
  CHECK(cfg.scene.t_frames == 20);
  CHECK(cfg.scene.dt == 1e-3);
  CHECK(cfg.eval.fractions_pct == std::vector<double>{0, 1, 2, 10, 50, 100});
  CHECK(cfg.eval.past_frames == 10);
}

TEST_CASE("config loading: strict keys, overrides, stable hash") {
  GlobalConfig base;
  std::string from_defaults = config_to_json(base);
  GlobalConfig reloaded = config_from_json_text(from_defaults);
  CHECK(config_hash(reloaded) == config_hash(base));

  GlobalConfig tweaked = config_from_json_text(R"({"model": {"depth": 3}})");
  CHECK(tweaked.model.depth == 3);
  CHECK(tweaked.model.heads == 8);
  CHECK(config_hash(tweaked) != config_hash(base));

  CHECK_THROWS_WITH_AS(config_from_json_text(R"({"nope": 1})"), doctest::Contains("unknown"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(config_from_json_text(R"({"model": {"dept": 3}})"),
                       doctest::Contains("unknown"), ValidationError);
  CHECK_THROWS_AS(config_from_json_text(R"({"model": {"depth": "deep"}})"), ValidationError);
  CHECK_THROWS_AS(config_from_json_text("not json"), ValidationError);
}

TEST_CASE("shipped config files load and the defaults file is exact") {
  GlobalConfig defaults;
  GlobalConfig loaded = load_config(std::string(STCM_CONFIG_DIR) + "/default.json");
  CHECK(config_hash(loaded) == config_hash(defaults));
  GlobalConfig toy = load_config(std::string(STCM_CONFIG_DIR) + "/toy.json");
  CHECK(toy.model.depth == 2);
  CHECK(toy.scene.n_ant == 8);
}

TEST_CASE("expand_offsets honors the attention mode") {
  CHECK(expand_offsets({1, 2}, AttnMode::bidirectional) == std::vector<int>{-2, -1, 1, 2});
  CHECK(expand_offsets({1, 2}, AttnMode::causal) == std::vector<int>{-2, -1});
  CHECK_THROWS_AS(expand_offsets({0}, AttnMode::causal), ValidationError);
}
