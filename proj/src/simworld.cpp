#include "gpm/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>

#include "gpm/errors.hpp"
#include "gpm/ogt.hpp"

namespace gpm {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Portable draws on raw mt19937_64 output: std:: distributions are
// implementation-defined, and dataset replay must be bit-stable.
double sim_uniform(std::mt19937_64& rng) {
  return double(rng() >> 11) * (1.0 / 9007199254740992.0);  // [0,1)
}

double sim_normal(std::mt19937_64& rng) {
  const double u1 = 1.0 - sim_uniform(rng);  // (0,1]
  const double u2 = sim_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

double object_radius(const SceneObject& o) {
  return std::hypot(o.half_w, o.half_l);
}

std::vector<int> outgoing_edges(const WorldConfig& cfg, int node) {
  std::vector<int> out;
  for (size_t i = 0; i < cfg.edges.size(); ++i) {
    if (cfg.edges[i].from == node) out.push_back(int(i));
  }
  return out;
}

// Weighted branch choice among a node's outgoing edges.
int sample_edge(const WorldConfig& cfg, const std::vector<int>& options,
                std::mt19937_64& rng) {
  double total = 0.0;
  for (int e : options) total += cfg.edges[e].weight;
  double u = sim_uniform(rng) * total;
  for (int e : options) {
    u -= cfg.edges[e].weight;
    if (u <= 0.0) return e;
  }
  return options.back();
}

void head_along(SceneObject& o, const WorldConfig& cfg, int edge) {
  const RouteNode& a = cfg.nodes[cfg.edges[edge].from];
  const RouteNode& b = cfg.nodes[cfg.edges[edge].to];
  const double d = std::hypot(b.x - a.x, b.y - a.y);
  o.dir_x = (b.x - a.x) / d;
  o.dir_y = (b.y - a.y) / d;
  o.edge_to = cfg.edges[edge].to;
}

// Pedestrian inside the vehicle's forward corridor, now or within a second.
bool must_yield(const SceneObject& v, const std::vector<SceneObject>& all,
                const WorldConfig& cfg) {
  if (v.cls != ObjectClass::kVehicle) return false;
  for (const SceneObject& p : all) {
    if (p.cls != ObjectClass::kPedestrian) continue;
    for (int look = 0; look <= 1; ++look) {
      const double px = p.x + look * p.dir_x * p.speed;
      const double py = p.y + look * p.dir_y * p.speed;
      const double rx = px - v.x, ry = py - v.y;
      const double ahead = rx * v.dir_x + ry * v.dir_y;
      const double side = -rx * v.dir_y + ry * v.dir_x;
      if (ahead > 0.0 && ahead < cfg.brake_lookahead &&
          std::fabs(side) < v.half_w + cfg.brake_margin + p.half_w) {
        return true;
      }
    }
  }
  return false;
}

// Moves one object `dist` cells along its route, sampling branches at nodes.
// Returns false when the route ends (despawn).
bool advance(SceneObject& o, const WorldConfig& cfg, std::mt19937_64& rng,
             double dist) {
  while (dist > 1e-12) {
    const RouteNode& t = cfg.nodes[o.edge_to];
    const double dx = t.x - o.x, dy = t.y - o.y;
    const double d = std::hypot(dx, dy);
    if (d <= dist) {
      o.x = t.x;
      o.y = t.y;
      dist -= d;
      const std::vector<int> options = outgoing_edges(cfg, o.edge_to);
      if (options.empty()) return false;
      head_along(o, cfg, sample_edge(cfg, options, rng));
    } else {
      o.dir_x = dx / d;
      o.dir_y = dy / d;
      o.x += o.dir_x * dist;
      o.y += o.dir_y * dist;
      dist = 0.0;
    }
  }
  return true;
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Exact overlap area between a wall and the unit cell at (row, col).
double cell_overlap(const RectArea& r, int row, int col) {
  const double w = std::min(r.x1, double(col + 1)) - std::max(r.x0, double(col));
  const double h = std::min(r.y1, double(row + 1)) - std::max(r.y0, double(row));
  return (w > 0 && h > 0) ? w * h : 0.0;
}

void parse_indexed(const KeyValueConfig& kv, const std::string& prefix,
                   const std::function<void(const std::string&)>& take) {
  std::vector<std::string> keys = kv.keys_with_prefix(prefix);
  std::sort(keys.begin(), keys.end(), [&](const std::string& a,
                                          const std::string& b) {
    return std::stoi(a.substr(prefix.size())) <
           std::stoi(b.substr(prefix.size()));
  });
  for (const std::string& k : keys) take(k);
}

}  // namespace

ObjectClass object_class_from(const std::string& name) {
  if (name == "vehicle") return ObjectClass::kVehicle;
  if (name == "cyclist") return ObjectClass::kCyclist;
  if (name == "pedestrian") return ObjectClass::kPedestrian;
  throw ConfigError("unknown object class '" + name + "'");
}

std::string object_class_name(ObjectClass cls) {
  switch (cls) {
    case ObjectClass::kVehicle: return "vehicle";
    case ObjectClass::kCyclist: return "cyclist";
    default: return "pedestrian";
  }
}

void WorldConfig::validate() const {
  if (width < 4 || height < 4) throw ConfigError("world grid too small");
  if (frame_rate <= 0) throw ConfigError("frame_rate must be positive");
  if (sensor_x < 0 || sensor_x >= width || sensor_y < 0 || sensor_y >= height) {
    throw ConfigError("sensor must sit inside the grid");
  }
  if (ray_step_deg <= 0 || ray_step_deg > 90) {
    throw ConfigError("ray_step_deg must be in (0, 90]");
  }
  if (m_hit < 0 || m_hit > 1 || m_free < 0 || m_free > 1) {
    throw ConfigError("masses must lie in [0,1]");
  }
  if (sigma_v < 0 || v_max <= 0) throw ConfigError("bad velocity parameters");
  if (n_warm < 0 || preroll < 0) throw ConfigError("counts must be >= 0");
  for (const RectArea& r : walls) {
    if (r.x0 >= r.x1 || r.y0 >= r.y1 || r.x0 < 0 || r.y0 < 0 ||
        r.x1 > width || r.y1 > height) {
      throw ConfigError("wall outside grid or degenerate");
    }
  }
  for (const RouteNode& n : nodes) {
    if (n.x < 0 || n.x >= width || n.y < 0 || n.y >= height) {
      throw ConfigError("route node outside grid");
    }
  }
  for (const RouteEdge& e : edges) {
    if (e.from < 0 || e.from >= int(nodes.size()) || e.to < 0 ||
        e.to >= int(nodes.size()) || e.from == e.to) {
      throw ConfigError("edge references invalid nodes");
    }
    if (e.weight <= 0) throw ConfigError("edge weight must be positive");
    if (std::hypot(nodes[e.to].x - nodes[e.from].x,
                   nodes[e.to].y - nodes[e.from].y) < 1e-6) {
      throw ConfigError("edge endpoints coincide");
    }
  }
  for (const SpawnerSpec& s : spawners) {
    if (s.rate_hz < 0 || s.rate_hz / frame_rate > 1.0) {
      throw ConfigError("spawn rate must satisfy 0 <= rate <= frame_rate");
    }
    if (s.speed_min <= 0 || s.speed_min > s.speed_max || s.speed_max > v_max) {
      throw ConfigError("spawner speeds must satisfy 0 < min <= max <= v_max");
    }
    if (s.entry_node < 0 || s.entry_node >= int(nodes.size())) {
      throw ConfigError("spawner entry node invalid");
    }
    bool has_exit = false;
    for (const RouteEdge& e : edges) has_exit |= (e.from == s.entry_node);
    if (!has_exit) throw ConfigError("spawner entry node has no outgoing edge");
    if (s.half_w <= 0 || s.half_l <= 0) {
      throw ConfigError("spawner footprint must be positive");
    }
  }
}

WorldConfig world_config_from(const KeyValueConfig& kv) {
  WorldConfig d;
  WorldConfig c;
  c.width = kv.get_int_or("width", d.width);
  c.height = kv.get_int_or("height", d.height);
  c.cell_size = kv.get_float_or("cell_size", float(d.cell_size));
  c.frame_rate = kv.get_float_or("frame_rate", float(d.frame_rate));
  c.sensor_x = kv.get_float_or("sensor_x", float(d.sensor_x));
  c.sensor_y = kv.get_float_or("sensor_y", float(d.sensor_y));
  c.ray_step_deg = kv.get_float_or("ray_step_deg", float(d.ray_step_deg));
  c.m_hit = kv.get_float_or("m_hit", float(d.m_hit));
  c.m_free = kv.get_float_or("m_free", float(d.m_free));
  c.sigma_v = kv.get_float_or("sigma_v", float(d.sigma_v));
  c.n_warm = kv.get_int_or("n_warm", d.n_warm);
  c.v_max = kv.get_float_or("v_max", float(d.v_max));
  c.accel = kv.get_float_or("accel", float(d.accel));
  c.brake_decel = kv.get_float_or("brake_decel", float(d.brake_decel));
  c.brake_lookahead =
      kv.get_float_or("brake_lookahead", float(d.brake_lookahead));
  c.brake_margin = kv.get_float_or("brake_margin", float(d.brake_margin));
  c.preroll = kv.get_int_or("preroll", d.preroll);
  c.seed = std::uint64_t(kv.get_i64_or("seed", std::int64_t(d.seed)));
  parse_indexed(kv, "wall.", [&](const std::string& k) {
    const std::vector<float> v = kv.get_floats(k);
    if (v.size() != 4) throw ConfigError(k + ": expected x0 y0 x1 y1");
    c.walls.push_back({v[0], v[1], v[2], v[3]});
  });
  parse_indexed(kv, "node.", [&](const std::string& k) {
    const std::vector<float> v = kv.get_floats(k);
    if (v.size() != 2) throw ConfigError(k + ": expected x y");
    c.nodes.push_back({v[0], v[1]});
  });
  parse_indexed(kv, "edge.", [&](const std::string& k) {
    const std::vector<float> v = kv.get_floats(k);
    if (v.size() != 3) throw ConfigError(k + ": expected from to weight");
    c.edges.push_back({int(v[0]), int(v[1]), v[2]});
  });
  parse_indexed(kv, "spawner.", [&](const std::string& k) {
    const std::vector<std::string> t = kv.get_tokens(k);
    if (t.size() != 7) {
      throw ConfigError(
          k + ": expected class rate speed_min speed_max entry half_w half_l");
    }
    SpawnerSpec s;
    s.cls = object_class_from(t[0]);
    s.rate_hz = std::stod(t[1]);
    s.speed_min = std::stod(t[2]);
    s.speed_max = std::stod(t[3]);
    s.entry_node = std::stoi(t[4]);
    s.half_w = std::stod(t[5]);
    s.half_l = std::stod(t[6]);
    c.spawners.push_back(s);
  });
  c.validate();
  return c;
}

void world_config_to(const WorldConfig& cfg, KeyValueConfig& kv) {
  kv.set_int("width", cfg.width);
  kv.set_int("height", cfg.height);
  kv.set_float("cell_size", float(cfg.cell_size));
  kv.set_float("frame_rate", float(cfg.frame_rate));
  kv.set_float("sensor_x", float(cfg.sensor_x));
  kv.set_float("sensor_y", float(cfg.sensor_y));
  kv.set_float("ray_step_deg", float(cfg.ray_step_deg));
  kv.set_float("m_hit", float(cfg.m_hit));
  kv.set_float("m_free", float(cfg.m_free));
  kv.set_float("sigma_v", float(cfg.sigma_v));
  kv.set_int("n_warm", cfg.n_warm);
  kv.set_float("v_max", float(cfg.v_max));
  kv.set_float("accel", float(cfg.accel));
  kv.set_float("brake_decel", float(cfg.brake_decel));
  kv.set_float("brake_lookahead", float(cfg.brake_lookahead));
  kv.set_float("brake_margin", float(cfg.brake_margin));
  kv.set_int("preroll", cfg.preroll);
  kv.set_int("seed", std::int64_t(cfg.seed));
  char buf[128];
  for (size_t i = 0; i < cfg.walls.size(); ++i) {
    const RectArea& r = cfg.walls[i];
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %.9g", r.x0, r.y0, r.x1,
                  r.y1);
    kv.set("wall." + std::to_string(i + 1), buf);
  }
  for (size_t i = 0; i < cfg.nodes.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g %.9g", cfg.nodes[i].x,
                  cfg.nodes[i].y);
    kv.set("node." + std::to_string(i + 1), buf);
  }
  for (size_t i = 0; i < cfg.edges.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%d %d %.9g", cfg.edges[i].from,
                  cfg.edges[i].to, cfg.edges[i].weight);
    kv.set("edge." + std::to_string(i + 1), buf);
  }
  for (size_t i = 0; i < cfg.spawners.size(); ++i) {
    const SpawnerSpec& s = cfg.spawners[i];
    std::snprintf(buf, sizeof(buf), "%s %.9g %.9g %.9g %d %.9g %.9g",
                  object_class_name(s.cls).c_str(), s.rate_hz, s.speed_min,
                  s.speed_max, s.entry_node, s.half_w, s.half_l);
    kv.set("spawner." + std::to_string(i + 1), buf);
  }
}

WorldState make_world(const WorldConfig& cfg) {
  cfg.validate();
  WorldState st;
  st.cfg = cfg;
  st.rng.seed(cfg.seed);
  return st;
}

void world_step(WorldState& state, double dt) {
  const WorldConfig& cfg = state.cfg;
  // Spawns first, in config order, one uniform draw per spawner per step.
  for (const SpawnerSpec& s : cfg.spawners) {
    const bool fire = sim_uniform(state.rng) < s.rate_hz * dt;
    if (!fire) continue;
    SceneObject o;
    o.id = state.next_id;
    o.cls = s.cls;
    o.half_w = s.half_w;
    o.half_l = s.half_l;
    o.x = cfg.nodes[s.entry_node].x;
    o.y = cfg.nodes[s.entry_node].y;
    o.cruise_speed =
        s.speed_min + sim_uniform(state.rng) * (s.speed_max - s.speed_min);
    o.speed = o.cruise_speed;
    head_along(o, cfg,
               sample_edge(cfg, outgoing_edges(cfg, s.entry_node), state.rng));
    bool overlaps = false;
    for (const SceneObject& other : state.objects) {
      const double d = std::hypot(other.x - o.x, other.y - o.y);
      if (d < object_radius(o) + object_radius(other)) overlaps = true;
    }
    if (overlaps) {
      ++state.spawn_rejections;  // saturation: entry still occupied
    } else {
      ++state.next_id;
      state.objects.push_back(o);
    }
  }

  for (SceneObject& o : state.objects) {
    o.braking = must_yield(o, state.objects, cfg);
  }
  std::vector<SceneObject> kept;
  kept.reserve(state.objects.size());
  for (SceneObject& o : state.objects) {
    if (o.braking) {
      o.speed = std::max(0.0, o.speed - cfg.brake_decel * dt);
    } else {
      o.speed = std::min(o.cruise_speed, o.speed + cfg.accel * dt);
    }
    if (advance(o, cfg, state.rng, o.speed * dt)) kept.push_back(o);
  }
  state.objects = std::move(kept);
  ++state.frame;
}

bool footprint_covers(const SceneObject& o, double px, double py) {
  const double rx = px - o.x, ry = py - o.y;
  if (o.cls == ObjectClass::kPedestrian) {
    return rx * rx + ry * ry <= o.half_w * o.half_w;
  }
  const double along = rx * o.dir_x + ry * o.dir_y;
  const double side = -rx * o.dir_y + ry * o.dir_x;
  return std::fabs(along) <= o.half_l && std::fabs(side) <= o.half_w;
}

std::vector<std::uint8_t> static_blocked(const WorldConfig& cfg) {
  std::vector<std::uint8_t> blocked(size_t(cfg.width) * cfg.height, 0);
  for (int i = 0; i < cfg.height; ++i) {
    for (int j = 0; j < cfg.width; ++j) {
      for (const RectArea& r : cfg.walls) {
        if (cell_overlap(r, i, j) > 1e-9) {
          blocked[size_t(i) * cfg.width + j] = 1;
          break;
        }
      }
    }
  }
  return blocked;
}

std::vector<int> object_owner(const WorldState& state) {
  const int w = state.cfg.width, h = state.cfg.height;
  std::vector<int> owner(size_t(w) * h, -1);
  for (size_t k = 0; k < state.objects.size(); ++k) {
    const SceneObject& o = state.objects[k];
    const double r = object_radius(o);
    const int j0 = std::max(0, int(std::floor(o.x - r)));
    const int j1 = std::min(w - 1, int(std::floor(o.x + r)));
    const int i0 = std::max(0, int(std::floor(o.y - r)));
    const int i1 = std::min(h - 1, int(std::floor(o.y + r)));
    for (int i = i0; i <= i1; ++i) {
      for (int j = j0; j <= j1; ++j) {
        if (footprint_covers(o, j + 0.5, i + 0.5)) {
          owner[size_t(i) * w + j] = int(k);
        }
      }
    }
  }
  return owner;
}

ViewMasks raycast_observe(const WorldState& state) {
  const WorldConfig& cfg = state.cfg;
  const int w = cfg.width, h = cfg.height;
  std::vector<std::uint8_t> blocked = static_blocked(cfg);
  const std::vector<int> owner = object_owner(state);
  for (size_t i = 0; i < blocked.size(); ++i) {
    if (owner[i] >= 0) blocked[i] = 1;
  }

  ViewMasks m;
  m.height = h;
  m.width = w;
  m.occupied.assign(size_t(w) * h, 0);
  m.free.assign(size_t(w) * h, 0);

  const double sx = cfg.sensor_x, sy = cfg.sensor_y;
  const int sj = int(std::floor(sx)), si = int(std::floor(sy));
  if (blocked[size_t(si) * w + sj]) {
    m.occupied[size_t(si) * w + sj] = 1;
  } else {
    m.free[size_t(si) * w + sj] = 1;
  }

  const int n_rays = int(std::lround(360.0 / cfg.ray_step_deg));
  const double inf = std::numeric_limits<double>::infinity();
  for (int rn = 0; rn < n_rays; ++rn) {
    const double th = rn * cfg.ray_step_deg * kPi / 180.0;
    const double dx = std::cos(th), dy = std::sin(th);
    // Exact cell-boundary walk: always step into the nearest crossed cell.
    int cx = sj, cy = si;
    int step_x = 0, step_y = 0;
    double t_max_x = inf, t_max_y = inf, t_dx = inf, t_dy = inf;
    if (dx > 1e-12) {
      step_x = 1;
      t_dx = 1.0 / dx;
      t_max_x = (std::floor(sx) + 1.0 - sx) / dx;
    } else if (dx < -1e-12) {
      step_x = -1;
      t_dx = -1.0 / dx;
      t_max_x = (sx - std::floor(sx)) / -dx;
    }
    if (dy > 1e-12) {
      step_y = 1;
      t_dy = 1.0 / dy;
      t_max_y = (std::floor(sy) + 1.0 - sy) / dy;
    } else if (dy < -1e-12) {
      step_y = -1;
      t_dy = -1.0 / dy;
      t_max_y = (sy - std::floor(sy)) / -dy;
    }
    while (true) {
      if (t_max_x < t_max_y) {
        cx += step_x;
        t_max_x += t_dx;
      } else {
        cy += step_y;
        t_max_y += t_dy;
      }
      if (cx < 0 || cx >= w || cy < 0 || cy >= h) break;
      const size_t idx = size_t(cy) * w + cx;
      if (blocked[idx]) {
        m.occupied[idx] = 1;
        break;
      }
      m.free[idx] = 1;
    }
  }
  // A cell grazed as free by one ray but hit first by another is occupied.
  for (size_t i = 0; i < m.free.size(); ++i) {
    if (m.occupied[i]) m.free[i] = 0;
  }
  return m;
}

DogmaFrame render_dogma(WorldState& state, const ViewMasks& masks) {
  const WorldConfig& cfg = state.cfg;
  const int w = cfg.width, h = cfg.height;
  if (masks.width != w || masks.height != h) {
    throw DataError("render_dogma: mask dims do not match world");
  }
  DogmaFrame f;
  f.height = h;
  f.width = w;
  f.m_occ.assign(size_t(w) * h, 0.0f);
  f.m_free.assign(size_t(w) * h, 0.0f);
  f.v_e.assign(size_t(w) * h, 0.0f);
  f.v_n.assign(size_t(w) * h, 0.0f);

  const std::vector<int> owner = object_owner(state);
  std::vector<std::uint8_t> seen(state.objects.size(), 0);
  for (size_t i = 0; i < owner.size(); ++i) {
    if (masks.occupied[i] && owner[i] >= 0) seen[owner[i]] = 1;
  }
  for (size_t k = 0; k < state.objects.size(); ++k) {
    if (seen[k]) {
      ++state.objects[k].seen_frames;
    } else {
      state.objects[k].seen_frames = 0;
    }
  }

  for (size_t i = 0; i < owner.size(); ++i) {
    if (masks.occupied[i]) {
      f.m_occ[i] = float(cfg.m_hit);
      const int k = owner[i];
      if (k >= 0 && state.objects[k].seen_frames >= cfg.n_warm) {
        const SceneObject& o = state.objects[k];
        const double ve = o.dir_x * o.speed + sim_normal(state.rng) * cfg.sigma_v;
        const double vn = o.dir_y * o.speed + sim_normal(state.rng) * cfg.sigma_v;
        f.v_e[i] = float(std::max(-1.0, std::min(1.0, ve / cfg.v_max)));
        f.v_n[i] = float(std::max(-1.0, std::min(1.0, vn / cfg.v_max)));
      }
    } else if (masks.free[i]) {
      f.m_free[i] = float(cfg.m_free);
    }
  }
  return f;
}

LabelFrame render_labels(const WorldState& state) {
  const WorldConfig& cfg = state.cfg;
  const int w = cfg.width, h = cfg.height;
  LabelFrame f;
  f.height = h;
  f.width = w;
  f.y_static.assign(size_t(w) * h, 0.0f);
  f.y_dynamic.assign(size_t(w) * h, 0.0f);

  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double cover = 0.0;
      for (const RectArea& r : cfg.walls) cover += cell_overlap(r, i, j);
      f.y_static[size_t(i) * w + j] = float(clamp01(cover));
    }
  }

  // Union coverage of all footprints, supersampled on an SxS grid per cell.
  constexpr int kSuper = 8;
  std::vector<std::uint8_t> candidate(size_t(w) * h, 0);
  for (const SceneObject& o : state.objects) {
    const double r = object_radius(o);
    const int j0 = std::max(0, int(std::floor(o.x - r)));
    const int j1 = std::min(w - 1, int(std::floor(o.x + r)));
    const int i0 = std::max(0, int(std::floor(o.y - r)));
    const int i1 = std::min(h - 1, int(std::floor(o.y + r)));
    for (int i = i0; i <= i1; ++i) {
      for (int j = j0; j <= j1; ++j) candidate[size_t(i) * w + j] = 1;
    }
  }
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      if (!candidate[size_t(i) * w + j]) continue;
      int hits = 0;
      for (int a = 0; a < kSuper; ++a) {
        for (int b = 0; b < kSuper; ++b) {
          const double px = j + (b + 0.5) / kSuper;
          const double py = i + (a + 0.5) / kSuper;
          for (const SceneObject& o : state.objects) {
            if (footprint_covers(o, px, py)) {
              ++hits;
              break;
            }
          }
        }
      }
      f.y_dynamic[size_t(i) * w + j] = float(hits) / float(kSuper * kSuper);
    }
  }
  return f;
}

std::string dataset_frame_path(const std::string& dir, int index,
                               const char* kind) {
  char name[64];
  std::snprintf(name, sizeof(name), "frame_%06d.%s.ogt", index, kind);
  return dir + "/" + name;
}

DatasetManifest generate_dataset(const WorldConfig& cfg, int n_frames,
                                 const std::string& out_dir) {
  if (n_frames < 1) throw ConfigError("n_frames must be >= 1");
  cfg.validate();
  std::filesystem::create_directories(out_dir);

  WorldState st = make_world(cfg);
  const double dt = 1.0 / cfg.frame_rate;
  for (int i = 0; i < cfg.preroll; ++i) world_step(st, dt);

  for (int fidx = 0; fidx < n_frames; ++fidx) {
    const ViewMasks masks = raycast_observe(st);
    const DogmaFrame dogma = render_dogma(st, masks);
    const LabelFrame labels = render_labels(st);
    write_ogt(dataset_frame_path(out_dir, fidx, "dogma"), dogma_to_ogt(dogma));
    write_ogt(dataset_frame_path(out_dir, fidx, "slabel"),
              OgtTensor{{cfg.height, cfg.width}, labels.y_static});
    write_ogt(dataset_frame_path(out_dir, fidx, "dlabel"),
              OgtTensor{{cfg.height, cfg.width}, labels.y_dynamic});
    if (fidx + 1 < n_frames) world_step(st, dt);
  }

  DatasetManifest man;
  man.frame_count = n_frames;
  man.split_index = n_frames * 4 / 5;
  man.seed = cfg.seed;
  KeyValueConfig ckv;
  world_config_to(cfg, ckv);
  man.config_hash = fnv1a_hex(ckv.canonical());
  man.frame_rate = cfg.frame_rate;
  man.v_max = cfg.v_max;
  man.cell_size = cfg.cell_size;
  man.width = cfg.width;
  man.height = cfg.height;

  KeyValueConfig mkv;
  mkv.set_int("frame_count", man.frame_count);
  mkv.set_int("split_index", man.split_index);
  mkv.set("seed", std::to_string(man.seed));
  mkv.set("config_hash", man.config_hash);
  mkv.set_float("frame_rate", float(man.frame_rate));
  mkv.set_float("v_max", float(man.v_max));
  mkv.set_float("cell_size", float(man.cell_size));
  mkv.set_int("width", man.width);
  mkv.set_int("height", man.height);
  mkv.write_file(out_dir + "/manifest.txt");
  return man;
}

DatasetManifest read_manifest(const std::string& dir) {
  const KeyValueConfig kv = KeyValueConfig::from_file(dir + "/manifest.txt");
  DatasetManifest man;
  man.frame_count = kv.get_int("frame_count");
  man.split_index = kv.get_int("split_index");
  man.seed = std::stoull(kv.get("seed"));
  man.config_hash = kv.get("config_hash");
  man.frame_rate = kv.get_float("frame_rate");
  man.v_max = kv.get_float("v_max");
  man.cell_size = kv.get_float("cell_size");
  man.width = kv.get_int("width");
  man.height = kv.get_int("height");
  return man;
}

}  // namespace gpm
