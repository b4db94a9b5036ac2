#include "stcm/scene.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>

namespace stcm {

namespace {

double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

Vec2 unit(Vec2 v) {
  double n = norm(v);
  return n > 0 ? Vec2{v.x / n, v.y / n} : Vec2{0, 0};
}

// Liang-Barsky segment vs axis-aligned rectangle.
bool segment_hits_rect(Vec2 p, Vec2 q, const Blocker& r) {
  double t0 = 0.0, t1 = 1.0;
  double d[2] = {q.x - p.x, q.y - p.y};
  double pl[2] = {p.x, p.y};
  double lo[2] = {r.lo.x, r.lo.y};
  double hi[2] = {r.hi.x, r.hi.y};
  for (int ax = 0; ax < 2; ++ax) {
    if (std::abs(d[ax]) < 1e-15) {
      if (pl[ax] < lo[ax] || pl[ax] > hi[ax]) return false;
      continue;
    }
    double ta = (lo[ax] - pl[ax]) / d[ax];
    double tb = (hi[ax] - pl[ax]) / d[ax];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

bool blocked(Vec2 p, Vec2 q, const std::vector<Blocker>& blockers) {
  for (const auto& b : blockers)
    if (segment_hits_rect(p, q, b)) return true;
  return false;
}

Vec2 mirror_point(Vec2 p, Vec2 a, Vec2 b) {
  Vec2 d = unit(b - a);
  Vec2 ap = p - a;
  double along = dot(ap, d);
  Vec2 foot = a + along * d;
  Vec2 off = p - foot;
  return {p.x - 2.0 * off.x, p.y - 2.0 * off.y};
}

}  // namespace

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * M_PI);
  if (a <= -M_PI) a += 2.0 * M_PI;
  if (a > M_PI) a -= 2.0 * M_PI;
  return a;
}

double interp_angle(double a, double b, double lambda) {
  double d = wrap_angle(b - a);
  return wrap_angle(a + lambda * d);
}

RoadGraph build_road_graph(double extent_x, double extent_y, double d_grid,
                           uint64_t layout_seed, double road_block_m) {
  if (d_grid <= 0.0) throw ValidationError("extent too small: d_grid must be positive");
  if (extent_x < 2.0 * d_grid - 1e-12 || extent_y < 2.0 * d_grid - 1e-12)
    throw ValidationError("extent too small");

  RoadGraph g;
  g.d_grid = d_grid;
  g.nx = static_cast<int>(std::floor(extent_x / d_grid + 1e-9)) + 1;
  g.ny = static_cast<int>(std::floor(extent_y / d_grid + 1e-9)) + 1;
  int64_t nv = static_cast<int64_t>(g.nx) * g.ny;
  g.vertices.resize(static_cast<size_t>(nv));
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix)
      g.vertices[static_cast<size_t>(iy) * g.nx + ix] = {ix * d_grid, iy * d_grid};

  // Road rows/columns every `block` cells, boundaries always included.
  int block = std::max(1, static_cast<int>(std::llround(road_block_m / d_grid)));
  auto road_lines = [&](int count) {
    std::vector<int> lines;
    for (int i = 0; i < count; i += block) lines.push_back(i);
    if (lines.back() != count - 1) lines.push_back(count - 1);
    return lines;
  };
  std::vector<int> rows = road_lines(g.ny);
  std::vector<int> cols = road_lines(g.nx);

  Rng rng(derive_seed(layout_seed, "road-layout"));
  int phase_r = static_cast<int>(rng.below(2));
  int phase_c = static_cast<int>(rng.below(2));

  // road index -> {-1: one-way negative, +1: one-way positive, 0: two-way (boundary)}
  std::vector<int> row_dir(rows.size()), col_dir(cols.size());
  for (size_t i = 0; i < rows.size(); ++i)
    row_dir[i] = (rows[i] == 0 || rows[i] == g.ny - 1) ? 0 : (((i + phase_r) % 2) ? -1 : 1);
  for (size_t i = 0; i < cols.size(); ++i)
    col_dir[i] = (cols[i] == 0 || cols[i] == g.nx - 1) ? 0 : (((i + phase_c) % 2) ? -1 : 1);

  std::vector<int> row_of(static_cast<size_t>(g.ny), -1), col_of(static_cast<size_t>(g.nx), -1);
  for (size_t i = 0; i < rows.size(); ++i) row_of[static_cast<size_t>(rows[i])] = static_cast<int>(i);
  for (size_t i = 0; i < cols.size(); ++i) col_of[static_cast<size_t>(cols[i])] = static_cast<int>(i);

  auto vid = [&](int ix, int iy) { return static_cast<int64_t>(iy) * g.nx + ix; };

  // Two passes: count then fill.
  std::vector<int32_t> deg(static_cast<size_t>(nv), 0);
  auto for_each_edge = [&](auto&& emit) {
    for (int iy = 0; iy < g.ny; ++iy) {
      int r = row_of[static_cast<size_t>(iy)];
      if (r < 0) continue;
      for (int ix = 0; ix < g.nx; ++ix) {
        if (row_dir[static_cast<size_t>(r)] >= 0 && ix + 1 < g.nx)
          emit(vid(ix, iy), vid(ix + 1, iy), Vec2{1, 0});
        if (row_dir[static_cast<size_t>(r)] <= 0 && ix - 1 >= 0)
          emit(vid(ix, iy), vid(ix - 1, iy), Vec2{-1, 0});
      }
    }
    for (int ix = 0; ix < g.nx; ++ix) {
      int c = col_of[static_cast<size_t>(ix)];
      if (c < 0) continue;
      for (int iy = 0; iy < g.ny; ++iy) {
        if (col_dir[static_cast<size_t>(c)] >= 0 && iy + 1 < g.ny)
          emit(vid(ix, iy), vid(ix, iy + 1), Vec2{0, 1});
        if (col_dir[static_cast<size_t>(c)] <= 0 && iy - 1 >= 0)
          emit(vid(ix, iy), vid(ix, iy - 1), Vec2{0, -1});
      }
    }
  };
  for_each_edge([&](int64_t from, int64_t, Vec2) { deg[static_cast<size_t>(from)]++; });

  g.edge_offsets.assign(static_cast<size_t>(nv) + 1, 0);
  for (int64_t v = 0; v < nv; ++v)
    g.edge_offsets[static_cast<size_t>(v) + 1] =
        g.edge_offsets[static_cast<size_t>(v)] + deg[static_cast<size_t>(v)];
  int64_t ne = g.edge_offsets[static_cast<size_t>(nv)];
  g.edge_targets.resize(static_cast<size_t>(ne));
  g.lane_direction.resize(static_cast<size_t>(ne));
  std::vector<int64_t> cursor(g.edge_offsets.begin(), g.edge_offsets.end() - 1);
  for_each_edge([&](int64_t from, int64_t to, Vec2 dir) {
    int64_t slot = cursor[static_cast<size_t>(from)]++;
    g.edge_targets[static_cast<size_t>(slot)] = static_cast<int32_t>(to);
    g.lane_direction[static_cast<size_t>(slot)] = dir;
  });

  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix)
      if (row_of[static_cast<size_t>(iy)] >= 0 || col_of[static_cast<size_t>(ix)] >= 0)
        g.road_vertices.push_back(static_cast<int32_t>(vid(ix, iy)));

  return g;
}

namespace {

struct WalkState {
  Vec2 pos;
  Vec2 heading;
  int64_t to_vertex;      // vertex the current edge points at
  double dist_to_vertex;  // remaining meters on the current edge
};

// Picks the next edge at a vertex; returns false when stuck.
bool pick_next_edge(const RoadGraph& g, int64_t v, Vec2 heading, ActorKind kind, Rng& rng,
                    int64_t* edge_out) {
  std::vector<int64_t> candidates;
  std::vector<int64_t> with_reverse;
  for (int64_t e = g.edge_offsets[v]; e < g.edge_offsets[v + 1]; ++e) {
    Vec2 d = g.lane_direction[static_cast<size_t>(e)];
    double c = dot(d, heading);
    bool reverse = c < -0.5;
    with_reverse.push_back(e);
    if (kind == ActorKind::pedestrian) {
      // bounded heading change: <= 90 degrees
      if (c >= -1e-9) candidates.push_back(e);
    } else {
      if (!reverse) candidates.push_back(e);
    }
  }
  if (candidates.empty() && kind == ActorKind::vehicle && !with_reverse.empty()) {
    // dead end: vehicles may turn back if a reverse lane exists
    candidates = with_reverse;
  }
  if (candidates.empty()) return false;
  *edge_out = candidates[static_cast<size_t>(rng.below(static_cast<int64_t>(candidates.size())))];
  return true;
}

}  // namespace

Trajectory sample_trajectory(const RoadGraph& graph, double speed, int n_steps, double dt,
                             uint64_t seed, ActorKind kind) {
  if (n_steps < 1) throw ValidationError("sample_trajectory: n_steps must be >= 1");
  if (speed < 0.0) throw ValidationError("sample_trajectory: negative speed");

  Rng rng(derive_seed(seed, "trajectory"));

  std::vector<int32_t> starts;
  for (int32_t v : graph.road_vertices)
    if (graph.out_degree(v) > 0) starts.push_back(v);
  if (starts.empty()) throw ValidationError("trajectory exhausted: graph has no outgoing edges");
  int64_t v0 = starts[static_cast<size_t>(rng.below(static_cast<int64_t>(starts.size())))];

  Trajectory traj;
  traj.dt = dt;
  traj.actor_kind = kind;
  traj.positions.reserve(static_cast<size_t>(n_steps) + 1);
  traj.velocities.reserve(static_cast<size_t>(n_steps) + 1);

  Vec2 start_pos = graph.vertices[static_cast<size_t>(v0)];
  if (speed == 0.0) {
    traj.positions.assign(static_cast<size_t>(n_steps) + 1, start_pos);
    traj.velocities.assign(static_cast<size_t>(n_steps) + 1, Vec2{0, 0});
    return traj;
  }

  int64_t e0;
  if (!pick_next_edge(graph, v0, Vec2{0, 0}, kind, rng, &e0))
    throw ValidationError("trajectory exhausted");

  WalkState st;
  st.pos = start_pos;
  st.heading = graph.lane_direction[static_cast<size_t>(e0)];
  st.to_vertex = graph.edge_targets[static_cast<size_t>(e0)];
  st.dist_to_vertex = graph.d_grid;

  traj.positions.push_back(st.pos);
  for (int t = 0; t < n_steps; ++t) {
    double remaining = speed * dt;
    while (remaining > 1e-15) {
      if (remaining < st.dist_to_vertex - 1e-15) {
        st.pos = st.pos + remaining * st.heading;
        st.dist_to_vertex -= remaining;
        remaining = 0.0;
      } else {
        remaining -= st.dist_to_vertex;
        int64_t v = st.to_vertex;
        st.pos = graph.vertices[static_cast<size_t>(v)];
        int64_t e;
        if (!pick_next_edge(graph, v, st.heading, kind, rng, &e))
          throw ValidationError("trajectory exhausted");
        st.heading = graph.lane_direction[static_cast<size_t>(e)];
        st.to_vertex = graph.edge_targets[static_cast<size_t>(e)];
        st.dist_to_vertex = graph.d_grid;
      }
    }
    traj.positions.push_back(st.pos);
  }
  for (int t = 0; t < n_steps; ++t) {
    Vec2 d = traj.positions[static_cast<size_t>(t) + 1] - traj.positions[static_cast<size_t>(t)];
    traj.velocities.push_back({d.x / dt, d.y / dt});
  }
  traj.velocities.push_back(speed * st.heading);
  return traj;
}

SceneGeometry build_scene_geometry(const SceneConfig& cfg) {
  SceneGeometry geo;
  geo.bs = cfg.bs_pos.value_or(Vec2{cfg.extent_x / 2.0, cfg.extent_y / 2.0});

  Rng rng(derive_seed(cfg.scene_seed, "scene-geo"));
  if (cfg.reflectors_override) {
    geo.reflectors = *cfg.reflectors_override;
  } else {
    int n = static_cast<int>(rng.range(cfg.min_reflectors, cfg.max_reflectors));
    for (int i = 0; i < n; ++i) {
      bool horizontal = rng.below(2) == 0;
      double cx = rng.uniform(0.1, 0.9) * cfg.extent_x;
      double cy = rng.uniform(0.1, 0.9) * cfg.extent_y;
      double len = rng.uniform(10.0, 40.0);
      Reflector r;
      if (horizontal) {
        r.a = {cx - len / 2, cy};
        r.b = {cx + len / 2, cy};
      } else {
        r.a = {cx, cy - len / 2};
        r.b = {cx, cy + len / 2};
      }
      r.loss = rng.uniform(cfg.refl_loss_min, cfg.refl_loss_max);
      geo.reflectors.push_back(r);
    }
  }
  if (cfg.blockers_override) {
    geo.blockers = *cfg.blockers_override;
  } else {
    int n = static_cast<int>(rng.range(cfg.min_blockers, cfg.max_blockers));
    for (int i = 0; i < n; ++i) {
      for (int attempt = 0; attempt < 16; ++attempt) {
        double cx = rng.uniform(0.1, 0.9) * cfg.extent_x;
        double cy = rng.uniform(0.1, 0.9) * cfg.extent_y;
        double hw = rng.uniform(1.0, 4.0);
        double hh = rng.uniform(1.0, 4.0);
        Blocker b{{cx - hw, cy - hh}, {cx + hw, cy + hh}};
        bool covers_bs = geo.bs.x >= b.lo.x && geo.bs.x <= b.hi.x && geo.bs.y >= b.lo.y &&
                         geo.bs.y <= b.hi.y;
        if (!covers_bs) {
          geo.blockers.push_back(b);
          break;
        }
      }
    }
  }
  return geo;
}

MpcSet synthesize_mpcs(Vec2 location, const SceneGeometry& geo, const SceneConfig& cfg) {
  MpcSet set;
  set.location = location;
  double lambda_c = kSpeedOfLight / cfg.fc;

  auto add_path = [&](int id, Vec2 first_leg_target, Vec2 last_point, double total_len,
                      double loss, bool reflected) {
    Mpc p;
    double d = std::max(total_len, 1e-3);
    double amp = loss * lambda_c / (4.0 * M_PI * d);
    p.gain = reflected ? std::complex<double>(-amp, 0.0) : std::complex<double>(amp, 0.0);
    p.delay = total_len / kSpeedOfLight;
    Vec2 u = unit(first_leg_target - geo.bs);
    p.aod = std::atan2(u.x, u.y);
    Vec2 v = unit(last_point - location);
    p.aoa = std::atan2(v.x, v.y);
    p.direction = {v.x, v.y, 0.0};
    p.path_id = id;
    set.paths.push_back(p);
  };

  // LoS
  double d_los = norm(location - geo.bs);
  if (d_los > 1e-12 && !blocked(geo.bs, location, geo.blockers)) {
    add_path(0, location, geo.bs, d_los, 1.0, false);
  }

  // Single-bounce images
  for (size_t k = 0; k < geo.reflectors.size(); ++k) {
    const Reflector& w = geo.reflectors[k];
    Vec2 img = mirror_point(geo.bs, w.a, w.b);
    Vec2 r = location - img;
    if (norm(r) < 1e-12) continue;
    Vec2 wvec = w.b - w.a;
    double denom = cross(r, wvec);
    if (std::abs(denom) < 1e-15) continue;  // ray parallel to wall
    Vec2 am = w.a - img;
    double t = cross(am, wvec) / denom;
    double s = cross(am, r) / denom;
    if (t <= 1e-12 || t >= 1.0 - 1e-12) continue;  // no crossing between image and UE
    if (s < 0.0 || s > 1.0) continue;              // misses the wall segment
    Vec2 refl_point = img + t * r;
    if (blocked(geo.bs, refl_point, geo.blockers)) continue;
    if (blocked(refl_point, location, geo.blockers)) continue;
    add_path(static_cast<int>(k) + 1, refl_point, refl_point, norm(r), w.loss, true);
  }

  if (set.paths.empty()) throw ValidationError("no coverage at requested location");

  if (static_cast<int>(set.paths.size()) > cfg.l_max) {
    std::stable_sort(set.paths.begin(), set.paths.end(),
                     [](const Mpc& a, const Mpc& b) { return std::abs(a.gain) > std::abs(b.gain); });
    set.paths.resize(static_cast<size_t>(cfg.l_max));
    std::sort(set.paths.begin(), set.paths.end(),
              [](const Mpc& a, const Mpc& b) { return a.path_id < b.path_id; });
  }
  return set;
}

MpcSet synthesize_mpcs(Vec2 location, uint64_t scene_seed, const SceneConfig& cfg) {
  SceneConfig c = cfg;
  c.scene_seed = scene_seed;
  SceneGeometry geo = build_scene_geometry(c);
  return synthesize_mpcs(location, geo, c);
}

double doppler_shift(const Mpc& mpc, Vec2 velocity, double fc) {
  if (fc <= 0.0) throw ValidationError("doppler_shift: fc must be positive");
  double radial = velocity.x * mpc.direction.x + velocity.y * mpc.direction.y;
  return fc / kSpeedOfLight * radial;
}

void align_mpc_sets(MpcSet& a, MpcSet& b) {
  std::map<int, std::pair<const Mpc*, const Mpc*>> by_id;
  for (const Mpc& p : a.paths) by_id[p.path_id].first = &p;
  for (const Mpc& p : b.paths) by_id[p.path_id].second = &p;
  std::vector<Mpc> pa, pb;
  for (auto& [id, pair] : by_id) {
    const Mpc* ma = pair.first;
    const Mpc* mb = pair.second;
    if (ma && mb) {
      pa.push_back(*ma);
      pb.push_back(*mb);
    } else if (ma) {
      pa.push_back(*ma);
      Mpc ghost = *ma;
      ghost.gain = 0.0;
      pb.push_back(ghost);
    } else {
      Mpc ghost = *mb;
      ghost.gain = 0.0;
      pa.push_back(ghost);
      pb.push_back(*mb);
    }
  }
  a.paths = std::move(pa);
  b.paths = std::move(pb);
}

MpcSet interpolate_mpcs(const MpcSet& a, const MpcSet& b, double lambda) {
  if (a.paths.size() != b.paths.size())
    throw ValidationError("path alignment: MpcSet sizes differ");
  if (lambda < 0.0 || lambda > 1.0) throw ValidationError("interpolate_mpcs: lambda outside [0,1]");
  double w0 = 1.0 - lambda, w1 = lambda;
  MpcSet out;
  out.location = {w0 * a.location.x + w1 * b.location.x, w0 * a.location.y + w1 * b.location.y};
  out.paths.resize(a.paths.size());
  for (size_t i = 0; i < a.paths.size(); ++i) {
    const Mpc& pa = a.paths[i];
    const Mpc& pb = b.paths[i];
    if (pa.path_id != pb.path_id) throw ValidationError("path alignment: path ids differ");
    Mpc& po = out.paths[i];
    po.path_id = pa.path_id;
    po.gain = w0 * pa.gain + w1 * pb.gain;
    po.delay = w0 * pa.delay + w1 * pb.delay;
    po.aod = interp_angle(pa.aod, pb.aod, lambda);
    po.aoa = interp_angle(pa.aoa, pb.aoa, lambda);
    Vec3 d{w0 * pa.direction.x + w1 * pb.direction.x, w0 * pa.direction.y + w1 * pb.direction.y,
           w0 * pa.direction.z + w1 * pb.direction.z};
    double n = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
    po.direction = n > 1e-12 ? Vec3{d.x / n, d.y / n, d.z / n} : pa.direction;
  }
  return out;
}

void synthesize_frame(const MpcSet& mpcs, Vec2 velocity, int t_index, double dt, double fc,
                      int n_ant, int n_sub, double bandwidth, std::complex<double>* out) {
  if ((n_sub & (n_sub - 1)) != 0) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true))
      std::fprintf(stderr, "warning: subcarrier count %d is not a power of two\n", n_sub);
  }
  const size_t L = mpcs.paths.size();
  const double delta_f = bandwidth / n_sub;

  std::vector<std::complex<double>> coef(L);
  std::vector<std::complex<double>> steer(L * static_cast<size_t>(n_ant));
  for (size_t l = 0; l < L; ++l) {
    const Mpc& p = mpcs.paths[l];
    double fd = doppler_shift(p, velocity, fc);
    double doppler_phase = 2.0 * M_PI * fd * t_index * dt;
    coef[l] = p.gain * std::polar(1.0, doppler_phase);
    double s = std::sin(p.aod);
    for (int n = 0; n < n_ant; ++n)
      steer[l * n_ant + n] = std::polar(1.0, M_PI * n * s);
  }

  for (int n = 0; n < n_ant; ++n)
    for (int k = 0; k < n_sub; ++k) out[static_cast<size_t>(n) * n_sub + k] = 0.0;

  std::vector<std::complex<double>> delay_k(static_cast<size_t>(n_sub));
  for (size_t l = 0; l < L; ++l) {
    const Mpc& p = mpcs.paths[l];
    for (int k = 0; k < n_sub; ++k) {
      double f_k = fc + (k - n_sub / 2) * delta_f;
      delay_k[static_cast<size_t>(k)] = std::polar(1.0, -2.0 * M_PI * f_k * p.delay);
    }
    for (int n = 0; n < n_ant; ++n) {
      std::complex<double> c = coef[l] * steer[l * n_ant + n];
      std::complex<double>* row = out + static_cast<size_t>(n) * n_sub;
      for (int k = 0; k < n_sub; ++k) row[k] += c * delay_k[static_cast<size_t>(k)];
    }
  }
}

Scene::Scene(const SceneConfig& c)
    : cfg(c),
      geometry(build_scene_geometry(c)),
      graph(build_road_graph(c.extent_x, c.extent_y, c.d_grid, c.scene_seed, c.road_block_m)) {}

namespace {

// A straight lane run: start vertex plus heading such that at least `length`
// meters continue without a turn. Returns false if the sampled start cannot
// fit the run.
bool sample_straight_run(const RoadGraph& g, double length, Rng& rng, Vec2* start, Vec2* heading) {
  std::vector<int32_t> starts;
  for (int32_t v : g.road_vertices)
    if (g.out_degree(v) > 0) starts.push_back(v);
  if (starts.empty()) return false;
  int64_t v0 = starts[static_cast<size_t>(rng.below(static_cast<int64_t>(starts.size())))];
  int64_t e0 = g.edge_offsets[v0] + rng.below(g.out_degree(v0));
  Vec2 h = g.lane_direction[static_cast<size_t>(e0)];

  double have = 0.0;
  int64_t v = v0;
  while (have < length) {
    bool advanced = false;
    for (int64_t e = g.edge_offsets[v]; e < g.edge_offsets[v + 1]; ++e) {
      if (dot(g.lane_direction[static_cast<size_t>(e)], h) > 0.5) {
        v = g.edge_targets[static_cast<size_t>(e)];
        have += g.d_grid;
        advanced = true;
        break;
      }
    }
    if (!advanced) return false;
  }
  *start = g.vertices[static_cast<size_t>(v0)];
  *heading = h;
  return true;
}

}  // namespace

ChannelSequence generate_sequence(const Scene& scene, double speed_min, double speed_max,
                                  int t_frames, double dt, uint64_t seed) {
  if (t_frames < 1) throw ValidationError("generate_sequence: t_frames must be >= 1");
  const SceneConfig& cfg = scene.cfg;
  Rng rng(derive_seed(seed, "sequence"));

  double speed = speed_max > speed_min ? rng.uniform(speed_min, speed_max) : speed_min;
  double span = speed * dt * (t_frames - 1);
  int max_node = static_cast<int>(std::floor(span / cfg.d_grid + 1e-12)) + 1;

  Vec2 start, heading{1, 0};
  std::vector<MpcSet> nodes;
  bool ok = false;
  std::string last_error = "trajectory exhausted";
  for (int attempt = 0; attempt < 64 && !ok; ++attempt) {
    if (!sample_straight_run(scene.graph, (max_node + 1) * cfg.d_grid, rng, &start, &heading))
      continue;
    try {
      nodes.clear();
      nodes.reserve(static_cast<size_t>(max_node) + 1);
      for (int n = 0; n <= max_node; ++n)
        nodes.push_back(
            synthesize_mpcs(start + (n * cfg.d_grid) * heading, scene.geometry, cfg));
      ok = true;
    } catch (const ValidationError& e) {
      last_error = e.what();  // coverage hole, try another start
    }
  }
  if (!ok) throw ValidationError(last_error);

  ChannelSequence seq;
  seq.t_frames = t_frames;
  seq.n_ant = cfg.n_ant;
  seq.n_sub = cfg.n_sub;
  seq.dt = dt;
  seq.fc = cfg.fc;
  seq.velocity = speed * heading;
  seq.city_tag = "scene-" + hex64(cfg.scene_seed);
  seq.frames.resize(static_cast<size_t>(t_frames) * cfg.n_ant * cfg.n_sub);

  for (int t = 0; t < t_frames; ++t) {
    double s = speed * dt * t;
    int n0 = std::min(static_cast<int>(std::floor(s / cfg.d_grid + 1e-12)), max_node - 1);
    double lambda = s / cfg.d_grid - n0;
    lambda = std::clamp(lambda, 0.0, 1.0);
    MpcSet a = nodes[static_cast<size_t>(n0)];
    MpcSet b = nodes[static_cast<size_t>(n0) + 1];
    align_mpc_sets(a, b);
    MpcSet at_t = interpolate_mpcs(a, b, lambda);
    synthesize_frame(at_t, seq.velocity, t, dt, cfg.fc, cfg.n_ant, cfg.n_sub, cfg.bandwidth,
                     seq.frames.data() + static_cast<size_t>(t) * cfg.n_ant * cfg.n_sub);
  }
  return seq;
}

ChannelSequence generate_sequence(const SceneConfig& cfg, double speed_min, double speed_max,
                                  int t_frames, double dt, uint64_t seed) {
  Scene scene(cfg);
  return generate_sequence(scene, speed_min, speed_max, t_frames, dt, seed);
}

}  // namespace stcm
