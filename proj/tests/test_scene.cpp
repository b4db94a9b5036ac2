#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <set>

#include "doctest.h"
#include "stcm/scene.hpp"

using namespace stcm;

namespace {

SceneConfig los_only_config() {
  SceneConfig cfg;
  cfg.extent_x = 200;
  cfg.extent_y = 200;
  cfg.bs_pos = Vec2{0, 0};
  cfg.reflectors_override = std::vector<Reflector>{};
  cfg.blockers_override = std::vector<Blocker>{};
  return cfg;
}

bool graphs_equal(const RoadGraph& a, const RoadGraph& b) {
  if (a.nx != b.nx || a.ny != b.ny) return false;
  if (a.edge_offsets != b.edge_offsets || a.edge_targets != b.edge_targets) return false;
  if (a.vertices.size() != b.vertices.size()) return false;
  for (size_t i = 0; i < a.vertices.size(); ++i)
    if (a.vertices[i].x != b.vertices[i].x || a.vertices[i].y != b.vertices[i].y) return false;
  return true;
}

}  // namespace

TEST_CASE("road graph lattice counting") {
  RoadGraph g = build_road_graph(1.0, 1.0, 0.1, 7);
  CHECK(g.n_vertices() == 121);
  CHECK(g.nx == 11);
  CHECK(g.ny == 11);
}

TEST_CASE("road graph edges connect lattice-adjacent vertices") {
  RoadGraph g = build_road_graph(2.0, 1.0, 0.1, 3);
  for (int64_t v = 0; v < g.n_vertices(); ++v) {
    for (int64_t e = g.edge_offsets[v]; e < g.edge_offsets[v + 1]; ++e) {
      Vec2 from = g.vertices[static_cast<size_t>(v)];
      Vec2 to = g.vertices[static_cast<size_t>(g.edge_targets[static_cast<size_t>(e)])];
      CHECK(norm(to - from) == doctest::Approx(g.d_grid).epsilon(1e-9));
    }
  }
  bool any_out = false;
  for (int64_t v = 0; v < g.n_vertices(); ++v) any_out = any_out || g.out_degree(v) > 0;
  CHECK(any_out);
}

TEST_CASE("interior one-way row vertices have out-degree 1, intersections >= 2") {
  // 30m x 30m at 0.5m spacing, roads every 10m: road lines {0,20,40,60}
  RoadGraph g = build_road_graph(30.0, 30.0, 0.5, 11, 10.0);
  CHECK(g.nx == 61);
  auto vid = [&](int ix, int iy) { return static_cast<int64_t>(iy) * g.nx + ix; };

  // interior road row (iy=20), off any road column (ix=5)
  CHECK(g.out_degree(vid(5, 20)) == 1);
  // intersections, including corners and boundary crossings
  for (int iy : {0, 20, 40, 60})
    for (int ix : {0, 20, 40, 60}) CHECK(g.out_degree(vid(ix, iy)) >= 2);
  // off-road vertices are isolated
  CHECK(g.out_degree(vid(5, 5)) == 0);
}

TEST_CASE("road graph deterministic for a fixed seed") {
  RoadGraph a = build_road_graph(5.0, 5.0, 0.1, 42);
  RoadGraph b = build_road_graph(5.0, 5.0, 0.1, 42);
  RoadGraph c = build_road_graph(5.0, 5.0, 0.1, 43);
  CHECK(graphs_equal(a, b));
  (void)c;  // different seed may or may not flip lane phases
}

TEST_CASE("degenerate extent rejected") {
  CHECK_THROWS_WITH_AS(build_road_graph(0.05, 1.0, 0.1, 1), doctest::Contains("extent too small"),
                       ValidationError);
}

TEST_CASE("stationary trajectory") {
  RoadGraph g = build_road_graph(5.0, 5.0, 0.1, 1);
  Trajectory t = sample_trajectory(g, 0.0, 10, 1e-3, 99);
  REQUIRE(t.positions.size() == 11);
  for (const auto& p : t.positions) {
    CHECK(p.x == t.positions[0].x);
    CHECK(p.y == t.positions[0].y);
  }
  for (const auto& v : t.velocities) {
    CHECK(v.x == 0.0);
    CHECK(v.y == 0.0);
  }
}

TEST_CASE("trajectory kinematic consistency and sub-grid displacement") {
  RoadGraph g = build_road_graph(30.0, 30.0, 0.1, 5);
  for (uint64_t seed : {1u, 2u, 3u, 4u}) {
    Trajectory t = sample_trajectory(g, 10.0, 50, 1e-3, seed);
    for (size_t i = 0; i + 1 < t.positions.size(); ++i) {
      double step = norm(t.positions[i + 1] - t.positions[i]);
      double vdt = norm(t.velocities[i]) * t.dt;
      CHECK(std::abs(step - vdt) < 1e-6);
      CHECK(step < 0.1 + 1e-12);          // sub-grid regime at 10 m/s, 1 ms
      CHECK(norm(t.velocities[i]) <= 10.0 + 1e-9);
    }
  }
}

TEST_CASE("trajectory path length arithmetic") {
  RoadGraph g = build_road_graph(30.0, 30.0, 0.1, 5);
  Trajectory t = sample_trajectory(g, 30.0, 20, 1e-3, 17);
  double total = 0.0;
  for (size_t i = 0; i + 1 < t.positions.size(); ++i)
    total += norm(t.positions[i + 1] - t.positions[i]);
  CHECK(total <= 0.6 + 1e-9);
  CHECK(total >= 0.57);  // a mid-step corner shortens the chord slightly
}

TEST_CASE("trajectory stays on road lines") {
  RoadGraph g = build_road_graph(30.0, 30.0, 0.5, 21, 10.0);
  Trajectory t = sample_trajectory(g, 5.0, 100, 0.01, 3);
  auto on_road_line = [&](double coord) {
    double cell = coord / 10.0;  // road spacing
    return std::abs(cell - std::round(cell)) < 1e-9;
  };
  for (const auto& p : t.positions) CHECK((on_road_line(p.x) || on_road_line(p.y)));
}

TEST_CASE("pedestrian heading changes bounded by 90 degrees") {
  RoadGraph g = build_road_graph(20.0, 20.0, 0.5, 13, 5.0);
  for (uint64_t seed : {10u, 11u, 12u}) {
    Trajectory t = sample_trajectory(g, 2.0, 200, 0.1, seed, ActorKind::pedestrian);
    for (size_t i = 0; i + 1 < t.velocities.size(); ++i) {
      Vec2 a = t.velocities[i], b = t.velocities[i + 1];
      double na = norm(a), nb = norm(b);
      if (na < 1e-12 || nb < 1e-12) continue;
      CHECK(dot(a, b) / (na * nb) >= -1e-9);
    }
  }
}

TEST_CASE("LoS-only geometry: delay and propagation direction") {
  SceneConfig cfg = los_only_config();
  double d = 50.0;
  MpcSet set = synthesize_mpcs(Vec2{d, 0}, 1, cfg);
  REQUIRE(set.paths.size() == 1);
  const Mpc& p = set.paths[0];
  CHECK(p.delay == doctest::Approx(d / kSpeedOfLight).epsilon(1e-12));
  CHECK(p.direction.x == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::abs(p.direction.y) < 1e-12);
  CHECK(p.path_id == 0);
  double lambda_c = kSpeedOfLight / cfg.fc;
  CHECK(std::abs(p.gain) == doctest::Approx(lambda_c / (4 * M_PI * d)).epsilon(1e-9));
}

TEST_CASE("mpcs deterministic and unit-direction") {
  SceneConfig cfg;
  cfg.scene_seed = 5;
  MpcSet a = synthesize_mpcs(Vec2{60, 80}, 5, cfg);
  MpcSet b = synthesize_mpcs(Vec2{60, 80}, 5, cfg);
  REQUIRE(a.paths.size() == b.paths.size());
  CHECK(a.paths.size() <= static_cast<size_t>(cfg.l_max));
  for (size_t i = 0; i < a.paths.size(); ++i) {
    CHECK(a.paths[i].gain == b.paths[i].gain);
    CHECK(a.paths[i].delay == b.paths[i].delay);
    CHECK(a.paths[i].aod == b.paths[i].aod);
    double n = std::sqrt(a.paths[i].direction.x * a.paths[i].direction.x +
                         a.paths[i].direction.y * a.paths[i].direction.y +
                         a.paths[i].direction.z * a.paths[i].direction.z);
    CHECK(std::abs(n - 1.0) < 1e-9);
    CHECK(a.paths[i].delay >= 0.0);
  }
}

TEST_CASE("nearby locations: per-path delay difference bounded by geometry") {
  SceneConfig cfg;
  cfg.scene_seed = 9;
  SceneGeometry geo = build_scene_geometry(cfg);
  MpcSet a = synthesize_mpcs(Vec2{60, 80}, geo, cfg);
  MpcSet b = synthesize_mpcs(Vec2{60.01, 80}, geo, cfg);
  align_mpc_sets(a, b);
  int shared = 0;
  for (size_t i = 0; i < a.paths.size(); ++i) {
    if (std::abs(a.paths[i].gain) == 0.0 || std::abs(b.paths[i].gain) == 0.0) continue;
    ++shared;
    CHECK(std::abs(a.paths[i].delay - b.paths[i].delay) <= 0.01 / kSpeedOfLight + 1e-18);
  }
  CHECK(shared >= 1);
}

TEST_CASE("path count truncates to the strongest l_max") {
  SceneConfig cfg = los_only_config();
  cfg.l_max = 4;
  std::vector<Reflector> walls;
  for (int i = 0; i < 12; ++i) {
    double y = 10.0 + 6.0 * i;
    walls.push_back({{10, y}, {90, y}, 0.8});
  }
  cfg.reflectors_override = walls;
  MpcSet set = synthesize_mpcs(Vec2{50, 1}, 1, cfg);
  CHECK(set.paths.size() == 4);
  CHECK(std::is_sorted(set.paths.begin(), set.paths.end(),
                       [](const Mpc& a, const Mpc& b) { return a.path_id < b.path_id; }));
}

TEST_CASE("fully blocked location reports no coverage") {
  SceneConfig cfg = los_only_config();
  cfg.blockers_override = std::vector<Blocker>{{{40, -5}, {45, 5}}};  // wall across the LoS
  CHECK_THROWS_WITH_AS(synthesize_mpcs(Vec2{50, 0}, 1, cfg), doctest::Contains("no coverage"),
                       ValidationError);
}

TEST_CASE("doppler shift formula") {
  Mpc p;
  p.direction = {1, 0, 0};
  CHECK(doppler_shift(p, Vec2{0, 30}, 3.5e9) == 0.0);
  double fd = doppler_shift(p, Vec2{30, 0}, 3.5e9);
  CHECK(fd == doctest::Approx(350.2423).epsilon(1e-5));
  CHECK(doppler_shift(p, Vec2{-30, 0}, 3.5e9) == -fd);
}

TEST_CASE("mpc interpolation endpoints, midpoint, wrap") {
  Mpc pa;
  pa.gain = {1.0, 0.5};
  pa.delay = 10e-9;
  pa.aod = 179.0 * M_PI / 180.0;
  pa.aoa = 0.3;
  pa.direction = {1, 0, 0};
  Mpc pb = pa;
  pb.gain = {2.0, -0.5};
  pb.delay = 20e-9;
  pb.aod = -179.0 * M_PI / 180.0;
  pb.aoa = 0.5;
  pb.direction = {0, 1, 0};
  MpcSet a{{0, 0}, {pa}}, b{{1, 0}, {pb}};

  MpcSet at0 = interpolate_mpcs(a, b, 0.0);
  CHECK(at0.paths[0].delay == pa.delay);
  CHECK(at0.paths[0].gain == pa.gain);
  MpcSet at1 = interpolate_mpcs(a, b, 1.0);
  CHECK(at1.paths[0].delay == pb.delay);

  MpcSet mid = interpolate_mpcs(a, b, 0.5);
  CHECK(mid.paths[0].delay == doctest::Approx(15e-9).epsilon(1e-12));
  CHECK(std::abs(std::abs(mid.paths[0].aod) - M_PI) < 1e-12);  // shorter arc -> 180, not 0

  // symmetry: interpolate(a,b,l) == interpolate(b,a,1-l)
  for (double l : {0.25, 0.5, 0.75}) {
    MpcSet x = interpolate_mpcs(a, b, l);
    MpcSet y = interpolate_mpcs(b, a, 1.0 - l);
    CHECK(std::abs(x.paths[0].delay - y.paths[0].delay) < 1e-12);
    CHECK(std::abs(x.paths[0].gain - y.paths[0].gain) < 1e-12);
    CHECK(std::abs(wrap_angle(x.paths[0].aod - y.paths[0].aod)) < 1e-12);
    CHECK(std::abs(x.paths[0].direction.x - y.paths[0].direction.x) < 1e-12);
  }

  MpcSet two{{0, 0}, {pa, pb}};
  CHECK_THROWS_WITH_AS(interpolate_mpcs(a, two, 0.5), doctest::Contains("path alignment"),
                       ValidationError);
}

TEST_CASE("frame synthesis: steering-only when phases vanish") {
  Mpc p;
  p.gain = 1.0;
  p.delay = 0.0;
  p.aod = 0.4;
  p.direction = {0, 1, 0};
  MpcSet set{{0, 0}, {p}};
  int n = 8, m = 16;
  std::vector<std::complex<double>> frame(static_cast<size_t>(n) * m);
  synthesize_frame(set, Vec2{0, 0}, 3, 1e-3, 3.5e9, n, m, 20e6, frame.data());
  for (int a = 0; a < n; ++a) {
    std::complex<double> expected = std::polar(1.0, M_PI * a * std::sin(0.4));
    for (int k = 0; k < m; ++k) {
      CHECK(std::abs(frame[static_cast<size_t>(a) * m + k] - expected) < 1e-12);
    }
  }
}

TEST_CASE("frame synthesis: doppler phase advance per frame") {
  Mpc p;
  p.gain = {0.5, 0.25};
  p.delay = 300e-9;
  p.aod = -0.2;
  p.direction = {1, 0, 0};
  MpcSet set{{0, 0}, {p}};
  double fc = 3.5e9;
  double v = 350.0 * kSpeedOfLight / fc;  // exactly 350 Hz doppler
  int n = 4, m = 8;
  std::vector<std::complex<double>> f0(static_cast<size_t>(n) * m), f1(f0.size()), f2(f0.size());
  synthesize_frame(set, Vec2{v, 0}, 0, 1e-3, fc, n, m, 20e6, f0.data());
  synthesize_frame(set, Vec2{v, 0}, 1, 1e-3, fc, n, m, 20e6, f1.data());
  synthesize_frame(set, Vec2{v, 0}, 2, 1e-3, fc, n, m, 20e6, f2.data());
  double expect = 2.0 * M_PI * 0.35;  // 2 pi f_d dt
  for (size_t i = 0; i < f0.size(); ++i) {
    CHECK(std::abs(std::arg(f1[i] / f0[i]) - expect) < 1e-9);
    CHECK(std::abs(std::arg(f2[i] / f1[i]) - expect) < 1e-9);
  }
}

TEST_CASE("frame synthesis is linear in the path set") {
  Rng rng(4);
  auto random_path = [&](int id) {
    Mpc p;
    p.gain = {rng.normal(), rng.normal()};
    p.delay = rng.uniform(0, 1e-6);
    p.aod = rng.uniform(-M_PI, M_PI);
    p.direction = {1, 0, 0};
    p.path_id = id;
    return p;
  };
  Mpc p1 = random_path(0), p2 = random_path(1);
  int n = 8, m = 16;
  std::vector<std::complex<double>> fa(static_cast<size_t>(n) * m), fb(fa.size()), fab(fa.size());
  MpcSet sa{{0, 0}, {p1}}, sb{{0, 0}, {p2}}, sab{{0, 0}, {p1, p2}};
  Vec2 vel{12.0, -3.0};
  synthesize_frame(sa, vel, 5, 1e-3, 3.5e9, n, m, 20e6, fa.data());
  synthesize_frame(sb, vel, 5, 1e-3, 3.5e9, n, m, 20e6, fb.data());
  synthesize_frame(sab, vel, 5, 1e-3, 3.5e9, n, m, 20e6, fab.data());
  double scale = 0.0, err = 0.0;
  for (size_t i = 0; i < fa.size(); ++i) {
    scale += std::norm(fab[i]);
    err += std::norm(fab[i] - fa[i] - fb[i]);
  }
  CHECK(std::sqrt(err) <= 1e-10 * std::sqrt(scale));
}

TEST_CASE("zero-velocity sequences are exactly time-invariant") {
  SceneConfig cfg;
  cfg.extent_x = 30;
  cfg.extent_y = 30;
  cfg.n_ant = 8;
  cfg.n_sub = 16;
  cfg.scene_seed = 3;
  Scene scene(cfg);
  ChannelSequence seq = generate_sequence(scene, 0.0, 0.0, 6, 1e-3, 77);
  size_t per_frame = static_cast<size_t>(seq.n_ant) * seq.n_sub;
  for (int t = 1; t < seq.t_frames; ++t)
    CHECK(std::memcmp(seq.frames.data(), seq.frames.data() + t * per_frame,
                      per_frame * sizeof(std::complex<double>)) == 0);
}

TEST_CASE("sequence generation deterministic at full-length settings") {
  SceneConfig cfg;
  cfg.extent_x = 30;
  cfg.extent_y = 30;
  cfg.n_ant = 8;
  cfg.n_sub = 16;
  cfg.scene_seed = 4;
  Scene scene(cfg);
  ChannelSequence a = generate_sequence(scene, 0.0, 30.0, 20, 1e-3, 123);
  ChannelSequence b = generate_sequence(scene, 0.0, 30.0, 20, 1e-3, 123);
  CHECK(a.t_frames == 20);
  CHECK(a.fc == 3.5e9);
  REQUIRE(a.frames.size() == b.frames.size());
  CHECK(std::memcmp(a.frames.data(), b.frames.data(),
                    a.frames.size() * sizeof(std::complex<double>)) == 0);
  CHECK(a.velocity.x == b.velocity.x);

  ChannelSequence c = generate_sequence(scene, 0.0, 30.0, 20, 1e-3, 124);
  CHECK(std::memcmp(a.frames.data(), c.frames.data(),
                    a.frames.size() * sizeof(std::complex<double>)) != 0);
}

TEST_CASE("exhaustion error when no straight run fits") {
  SceneConfig cfg;
  cfg.extent_x = 1.0;
  cfg.extent_y = 1.0;
  cfg.scene_seed = 2;
  cfg.bs_pos = Vec2{0.5, 0.5};
  cfg.reflectors_override = std::vector<Reflector>{};
  cfg.blockers_override = std::vector<Blocker>{};
  Scene scene(cfg);
  // 2000 m/s for 20 ms needs a 40 m straight lane in a 1 m scene
  CHECK_THROWS_AS(generate_sequence(scene, 2000.0, 2000.0, 20, 1e-3, 5), ValidationError);
}
