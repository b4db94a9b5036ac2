#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "stcm/common.hpp"

namespace stcm {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

// Directed lattice road graph. Vertices are all lattice points of the extent;
// edges exist only along road rows/columns. Interior roads are one-way with
// alternating directions, boundary roads are two-way so every road vertex can
// keep moving.
struct RoadGraph {
  int nx = 0, ny = 0;
  double d_grid = 0.0;
  std::vector<Vec2> vertices;               // nx*ny, index = iy*nx + ix
  std::vector<int64_t> edge_offsets;        // CSR over vertices, size nx*ny+1
  std::vector<int32_t> edge_targets;
  std::vector<Vec2> lane_direction;         // per edge, unit heading
  std::vector<int32_t> road_vertices;       // vertices lying on at least one road

  int64_t n_vertices() const { return static_cast<int64_t>(vertices.size()); }
  int64_t out_degree(int64_t v) const { return edge_offsets[v + 1] - edge_offsets[v]; }
};

enum class ActorKind { vehicle, pedestrian };

struct Trajectory {
  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;
  double dt = 0.0;
  ActorKind actor_kind = ActorKind::vehicle;
};

// One multipath component. `direction` points from the UE toward the last
// interaction point (BS for LoS), so approaching motion gives positive
// Doppler.
struct Mpc {
  std::complex<double> gain;
  double delay = 0.0;   // seconds
  double aod = 0.0;     // radians, sin(aod) is the array-axis component
  double aoa = 0.0;     // radians
  Vec3 direction;       // unit
  int path_id = 0;      // 0 = LoS, k = reflector k-1
};

struct MpcSet {
  Vec2 location;
  std::vector<Mpc> paths;
};

struct ChannelSequence {
  int t_frames = 0;
  int n_ant = 0;
  int n_sub = 0;
  std::vector<std::complex<double>> frames;  // t * n_ant * n_sub, row-major (t, n, m)
  double dt = 0.0;
  double fc = 0.0;
  Vec2 velocity;
  std::string city_tag;

  std::complex<double>& at(int t, int n, int m) {
    return frames[(static_cast<size_t>(t) * n_ant + n) * n_sub + m];
  }
  std::complex<double> at(int t, int n, int m) const {
    return frames[(static_cast<size_t>(t) * n_ant + n) * n_sub + m];
  }
};

struct Reflector {
  Vec2 a, b;          // wall segment endpoints
  double loss = 0.7;  // amplitude loss factor
};

struct Blocker {
  Vec2 lo, hi;  // axis-aligned rectangle
};

struct SceneConfig {
  double extent_x = 200.0;
  double extent_y = 200.0;
  double d_grid = 0.1;
  double road_block_m = 10.0;
  std::optional<Vec2> bs_pos;  // default: extent center
  int min_reflectors = 4;
  int max_reflectors = 8;
  int min_blockers = 0;
  int max_blockers = 2;
  double refl_loss_min = 0.4;
  double refl_loss_max = 0.9;
  int l_max = 16;
  double fc = 3.5e9;
  double bandwidth = 20e6;
  int n_ant = 32;
  int n_sub = 64;
  int t_frames = 20;
  double dt = 1e-3;
  double speed_min = 0.0;
  double speed_max = 30.0;
  uint64_t scene_seed = 1;
  // Test hooks: explicit geometry instead of seeded sampling.
  std::optional<std::vector<Reflector>> reflectors_override;
  std::optional<std::vector<Blocker>> blockers_override;
};

struct SceneGeometry {
  Vec2 bs;
  std::vector<Reflector> reflectors;
  std::vector<Blocker> blockers;
};

RoadGraph build_road_graph(double extent_x, double extent_y, double d_grid,
                           uint64_t layout_seed, double road_block_m = 10.0);

Trajectory sample_trajectory(const RoadGraph& graph, double speed, int n_steps, double dt,
                             uint64_t seed, ActorKind kind = ActorKind::vehicle);

SceneGeometry build_scene_geometry(const SceneConfig& cfg);

MpcSet synthesize_mpcs(Vec2 location, const SceneGeometry& geo, const SceneConfig& cfg);
MpcSet synthesize_mpcs(Vec2 location, uint64_t scene_seed, const SceneConfig& cfg);

double doppler_shift(const Mpc& mpc, Vec2 velocity, double fc);

MpcSet interpolate_mpcs(const MpcSet& a, const MpcSet& b, double lambda);

// Pads both sets to a common path-id order; missing paths get a zero-gain
// copy of the counterpart's geometry so births/deaths fade smoothly.
void align_mpc_sets(MpcSet& a, MpcSet& b);

// H[n,k] = sum_l gain_l * exp(-j 2 pi f_k tau_l) * exp(j 2 pi f_dl t dt) * exp(j pi n sin(aod_l))
// with f_k = fc + (k - M/2) * bandwidth / M.
void synthesize_frame(const MpcSet& mpcs, Vec2 velocity, int t_index, double dt, double fc,
                      int n_ant, int n_sub, double bandwidth,
                      std::complex<double>* out /* n_ant * n_sub */);

ChannelSequence generate_sequence(const SceneConfig& cfg, double speed_min, double speed_max,
                                  int t_frames, double dt, uint64_t seed);

// Reuses prebuilt geometry/graph across sequences of the same scene.
struct Scene {
  explicit Scene(const SceneConfig& cfg);
  SceneConfig cfg;
  SceneGeometry geometry;
  RoadGraph graph;
};

ChannelSequence generate_sequence(const Scene& scene, double speed_min, double speed_max,
                                  int t_frames, double dt, uint64_t seed);

// Wrap-aware: interpolates along the shorter arc, result in (-pi, pi].
double interp_angle(double a, double b, double lambda);
double wrap_angle(double a);

}  // namespace stcm
