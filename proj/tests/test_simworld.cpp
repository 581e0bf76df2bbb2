#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "gpm/config.hpp"
#include "gpm/domain.hpp"
#include "gpm/errors.hpp"
#include "gpm/ogt.hpp"
#include "gpm/simworld.hpp"

using namespace gpm;
namespace fs = std::filesystem;

namespace {

constexpr double kTau = 6.28318530717958647692;

// Straight two-node lane along y=10; no walls, no spawners, no noise.
WorldConfig corridor_config() {
  WorldConfig c;
  c.width = 64;
  c.height = 64;
  c.sensor_x = 32.5;
  c.sensor_y = 32.5;
  c.ray_step_deg = 1.0;
  c.sigma_v = 0.0;
  c.seed = 7;
  c.nodes = {{5.0, 10.0}, {58.0, 10.0}};
  c.edges = {{0, 1, 1.0}};
  return c;
}

SceneObject make_object(ObjectClass cls, double x, double y, double dx,
                        double dy, double speed, double hw, double hl) {
  SceneObject o;
  o.id = 1000;
  o.cls = cls;
  o.half_w = hw;
  o.half_l = hl;
  o.x = x;
  o.y = y;
  o.dir_x = dx;
  o.dir_y = dy;
  o.speed = speed;
  o.cruise_speed = speed;
  o.edge_to = 1;
  return o;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

// Blocked raster rebuilt outside the library: per-cell wall overlap plus
// cell-center footprint tests.
std::vector<std::uint8_t> blocked_raster(const WorldState& st) {
  const int w = st.cfg.width, h = st.cfg.height;
  std::vector<std::uint8_t> blocked(size_t(w) * h, 0);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (const RectArea& r : st.cfg.walls) {
        const double ow = std::min(r.x1, j + 1.0) - std::max(r.x0, double(j));
        const double oh = std::min(r.y1, i + 1.0) - std::max(r.y0, double(i));
        if (ow > 1e-9 && oh > 1e-9) blocked[size_t(i) * w + j] = 1;
      }
      for (const SceneObject& o : st.objects) {
        if (footprint_covers(o, j + 0.5, i + 0.5)) {
          blocked[size_t(i) * w + j] = 1;
        }
      }
    }
  }
  return blocked;
}

// Independent visibility oracle: for each ray angle, slab-intersect every
// grid cell with the ray, order crossings by entry distance, and walk to the
// first blocked cell. No incremental stepping shared with the implementation.
struct OracleView {
  std::set<size_t> occ, free_cells;
};

OracleView oracle_view(const WorldConfig& cfg,
                       const std::vector<std::uint8_t>& blocked) {
  const int w = cfg.width, h = cfg.height;
  const double sx = cfg.sensor_x, sy = cfg.sensor_y;
  OracleView v;
  const size_t sensor_idx =
      size_t(std::floor(sy)) * w + size_t(std::floor(sx));
  if (blocked[sensor_idx]) {
    v.occ.insert(sensor_idx);
  } else {
    v.free_cells.insert(sensor_idx);
  }
  const int n_rays = int(std::lround(360.0 / cfg.ray_step_deg));
  for (int rn = 0; rn < n_rays; ++rn) {
    const double th = rn * cfg.ray_step_deg * kTau / 360.0;
    const double dx = std::cos(th), dy = std::sin(th);
    std::vector<std::pair<double, size_t>> crossings;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        double t0 = -1e300, t1 = 1e300;
        if (std::fabs(dx) < 1e-12) {
          if (sx < j || sx >= j + 1) continue;
        } else {
          const double a = (j - sx) / dx, b = (j + 1 - sx) / dx;
          t0 = std::max(t0, std::min(a, b));
          t1 = std::min(t1, std::max(a, b));
        }
        if (std::fabs(dy) < 1e-12) {
          if (sy < i || sy >= i + 1) continue;
        } else {
          const double a = (i - sy) / dy, b = (i + 1 - sy) / dy;
          t0 = std::max(t0, std::min(a, b));
          t1 = std::min(t1, std::max(a, b));
        }
        if (t1 - t0 <= 1e-12) continue;  // grazing corner or no overlap
        if (t0 > 1e-9) crossings.push_back({t0, size_t(i) * w + j});
      }
    }
    std::sort(crossings.begin(), crossings.end());
    for (const auto& [t, idx] : crossings) {
      if (blocked[idx]) {
        v.occ.insert(idx);
        break;
      }
      v.free_cells.insert(idx);
    }
  }
  for (size_t idx : v.occ) v.free_cells.erase(idx);
  return v;
}

std::set<size_t> mask_set(const std::vector<std::uint8_t>& m) {
  std::set<size_t> s;
  for (size_t i = 0; i < m.size(); ++i) {
    if (m[i]) s.insert(i);
  }
  return s;
}

}  // namespace

TEST_CASE("occupancy probability maps masses to [0,1]") {
  CHECK(occupancy_probability(1.0f, 0.0f) == 1.0f);
  CHECK(occupancy_probability(0.0f, 0.0f) == 0.5f);
  CHECK(occupancy_probability(0.0f, 1.0f) == 0.0f);
  CHECK(occupancy_probability(0.95f, 0.0f) == doctest::Approx(0.975));
  CHECK_THROWS_AS(occupancy_probability(0.8f, 0.8f), DataError);
  CHECK_THROWS_AS(occupancy_probability(-0.1f, 0.0f), DataError);
  CHECK_THROWS_AS(occupancy_probability(0.0f, 1.5f), DataError);
}

TEST_CASE("object classes round trip by name") {
  for (ObjectClass c : {ObjectClass::kVehicle, ObjectClass::kCyclist,
                        ObjectClass::kPedestrian}) {
    CHECK(object_class_from(object_class_name(c)) == c);
  }
  CHECK_THROWS_AS(object_class_from("tank"), ConfigError);
}

TEST_CASE("world config validation rejects bad geometry") {
  const WorldConfig base = corridor_config();
  CHECK_NOTHROW(base.validate());

  auto broken = [&](auto mutate) {
    WorldConfig c = base;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(broken([](WorldConfig& c) { c.width = 2; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(broken([](WorldConfig& c) { c.frame_rate = 0; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(broken([](WorldConfig& c) { c.sensor_x = 64; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(broken([](WorldConfig& c) { c.ray_step_deg = 0; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(
      broken([](WorldConfig& c) { c.ray_step_deg = 120; }).validate(),
      ConfigError);
  CHECK_THROWS_AS(broken([](WorldConfig& c) { c.m_hit = 1.2; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(broken([](WorldConfig& c) { c.v_max = 0; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(broken([](WorldConfig& c) { c.n_warm = -1; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(
      broken([](WorldConfig& c) { c.walls.push_back({5, 5, 5, 9}); }).validate(),
      ConfigError);
  CHECK_THROWS_AS(
      broken([](WorldConfig& c) { c.walls.push_back({60, 60, 70, 61}); })
          .validate(),
      ConfigError);
  CHECK_THROWS_AS(
      broken([](WorldConfig& c) { c.nodes.push_back({-1, 5}); }).validate(),
      ConfigError);
  CHECK_THROWS_AS(
      broken([](WorldConfig& c) { c.edges.push_back({0, 0, 1}); }).validate(),
      ConfigError);
  CHECK_THROWS_AS(
      broken([](WorldConfig& c) { c.edges.push_back({0, 5, 1}); }).validate(),
      ConfigError);
  CHECK_THROWS_AS(
      broken([](WorldConfig& c) { c.edges.push_back({1, 0, 0}); }).validate(),
      ConfigError);
  CHECK_THROWS_AS(broken([](WorldConfig& c) {
                    c.nodes.push_back({5.0, 10.0});
                    c.edges.push_back({0, 2, 1});
                  }).validate(),
                  ConfigError);

  auto spawn = [&](auto mutate) {
    WorldConfig c = base;
    SpawnerSpec s;
    s.rate_hz = 1.0;
    s.speed_min = 1.0;
    s.speed_max = 2.0;
    s.entry_node = 0;
    mutate(s);
    c.spawners.push_back(s);
    return c;
  };
  CHECK_NOTHROW(spawn([](SpawnerSpec&) {}).validate());
  CHECK_THROWS_AS(spawn([](SpawnerSpec& s) { s.rate_hz = 20; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(spawn([](SpawnerSpec& s) { s.speed_min = 0; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(spawn([](SpawnerSpec& s) { s.speed_max = 99; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(spawn([](SpawnerSpec& s) { s.entry_node = 1; }).validate(),
                  ConfigError);  // lane end has no outgoing edge
  CHECK_THROWS_AS(spawn([](SpawnerSpec& s) { s.half_w = 0; }).validate(),
                  ConfigError);
}

TEST_CASE("world config round trips through key=value form") {
  WorldConfig c;
  c.width = 48;
  c.height = 40;
  c.cell_size = 0.125;
  c.frame_rate = 10.0;
  c.sensor_x = 16.5;
  c.sensor_y = 20.25;
  c.ray_step_deg = 0.5;
  c.m_hit = 0.9375;
  c.m_free = 0.875;
  c.sigma_v = 0.125;
  c.n_warm = 4;
  c.v_max = 8.0;
  c.accel = 2.5;
  c.brake_decel = 6.0;
  c.brake_lookahead = 12.0;
  c.brake_margin = 1.5;
  c.preroll = 20;
  c.seed = 12345;
  c.walls = {{4.0, 4.0, 8.5, 6.25}, {20.0, 3.0, 23.0, 12.0}};
  c.nodes = {{5.25, 10.5}, {40.0, 10.5}, {5.25, 30.0}};
  c.edges = {{0, 1, 0.75}, {0, 2, 0.25}};
  SpawnerSpec s;
  s.cls = ObjectClass::kCyclist;
  s.rate_hz = 2.5;
  s.speed_min = 1.5;
  s.speed_max = 4.0;
  s.entry_node = 0;
  s.half_w = 0.5;
  s.half_l = 1.25;
  c.spawners = {s};

  KeyValueConfig kv;
  world_config_to(c, kv);
  const WorldConfig r = world_config_from(kv);

  CHECK(r.width == c.width);
  CHECK(r.height == c.height);
  CHECK(r.cell_size == c.cell_size);
  CHECK(r.sensor_x == c.sensor_x);
  CHECK(r.sensor_y == c.sensor_y);
  CHECK(r.ray_step_deg == c.ray_step_deg);
  CHECK(r.m_hit == c.m_hit);
  CHECK(r.m_free == c.m_free);
  CHECK(r.sigma_v == c.sigma_v);
  CHECK(r.n_warm == c.n_warm);
  CHECK(r.v_max == c.v_max);
  CHECK(r.accel == c.accel);
  CHECK(r.brake_decel == c.brake_decel);
  CHECK(r.brake_lookahead == c.brake_lookahead);
  CHECK(r.brake_margin == c.brake_margin);
  CHECK(r.preroll == c.preroll);
  CHECK(r.seed == c.seed);
  REQUIRE(r.walls.size() == 2);
  CHECK(r.walls[0].x1 == 8.5);
  CHECK(r.walls[1].y1 == 12.0);
  REQUIRE(r.nodes.size() == 3);
  CHECK(r.nodes[0].x == 5.25);
  CHECK(r.nodes[2].y == 30.0);
  REQUIRE(r.edges.size() == 2);
  CHECK(r.edges[0].weight == 0.75);
  CHECK(r.edges[1].to == 2);
  REQUIRE(r.spawners.size() == 1);
  CHECK(r.spawners[0].cls == ObjectClass::kCyclist);
  CHECK(r.spawners[0].rate_hz == 2.5);
  CHECK(r.spawners[0].half_l == 1.25);
}

TEST_CASE("indexed config keys order numerically, not lexically") {
  KeyValueConfig kv;
  for (int n = 1; n <= 12; ++n) {
    kv.set("node." + std::to_string(n), std::to_string(n) + " 1");
  }
  kv.set("edge.1", "0 1 1");
  const WorldConfig c = world_config_from(kv);
  REQUIRE(c.nodes.size() == 12);
  for (int n = 0; n < 12; ++n) CHECK(c.nodes[n].x == double(n + 1));

  KeyValueConfig bad;
  bad.set("wall.1", "1 2 3");
  CHECK_THROWS_AS(world_config_from(bad), ConfigError);
  KeyValueConfig bad2;
  bad2.set("node.1", "1 1");
  bad2.set("node.2", "5 1");
  bad2.set("edge.1", "0 1 1");
  bad2.set("spawner.1", "vehicle 1 1 2 0 1");  // one token short
  CHECK_THROWS_AS(world_config_from(bad2), ConfigError);
  KeyValueConfig bad3 = bad2;
  bad3.set("spawner.1", "hovercraft 1 1 2 0 1 1");
  CHECK_THROWS_AS(world_config_from(bad3), ConfigError);
}

TEST_CASE("straight route kinematics are exact") {
  WorldState st = make_world(corridor_config());
  st.objects.push_back(
      make_object(ObjectClass::kVehicle, 5.0, 10.0, 1, 0, 3.0, 1.0, 2.0));
  for (int n = 0; n < 40; ++n) world_step(st, 0.1);
  REQUIRE(st.objects.size() == 1);
  CHECK(std::fabs(st.objects[0].x - 17.0) < 1e-9);  // 5 + 40*3*0.1
  CHECK(st.objects[0].y == 10.0);
  CHECK(st.objects[0].speed == 3.0);
  CHECK(st.frame == 40);
}

TEST_CASE("objects despawn at route ends") {
  WorldState st = make_world(corridor_config());
  st.objects.push_back(
      make_object(ObjectClass::kVehicle, 56.0, 10.0, 1, 0, 3.0, 1.0, 2.0));
  world_step(st, 1.0);
  CHECK(st.objects.empty());
}

TEST_CASE("vehicles brake for pedestrians ahead and resume after") {
  WorldState st = make_world(corridor_config());
  st.objects.push_back(
      make_object(ObjectClass::kVehicle, 5.0, 10.0, 1, 0, 4.0, 1.0, 2.0));
  st.objects.push_back(
      make_object(ObjectClass::kPedestrian, 20.0, 10.0, 0, 1, 0.0, 0.4, 0.4));

  bool braked = false;
  double prev_speed = st.objects[0].speed;
  for (int n = 0; n < 30; ++n) {
    world_step(st, 0.1);
    const SceneObject& v = st.objects[0];
    if (v.braking) {
      braked = true;
      CHECK((v.speed < prev_speed || v.speed == 0.0));
    }
    prev_speed = v.speed;
  }
  CHECK(braked);
  CHECK(st.objects[0].speed == 0.0);
  CHECK(st.objects[0].x < 18.0);  // stopped short of the crossing
  CHECK(st.objects[1].x == 20.0);

  // Pedestrian clears; the vehicle accelerates back to cruise speed.
  st.objects.erase(st.objects.begin() + 1);
  prev_speed = 0.0;
  for (int n = 0; n < 25; ++n) {
    world_step(st, 0.1);
    const SceneObject& v = st.objects[0];
    CHECK(!v.braking);
    CHECK(v.speed >= prev_speed);
    prev_speed = v.speed;
  }
  CHECK(st.objects[0].speed == 4.0);
}

TEST_CASE("yielding ignores pedestrians behind or beside the corridor") {
  WorldState st = make_world(corridor_config());
  st.objects.push_back(
      make_object(ObjectClass::kVehicle, 10.0, 10.0, 1, 0, 4.0, 1.0, 2.0));
  st.objects.push_back(
      make_object(ObjectClass::kPedestrian, 7.0, 10.0, 0, 1, 0.0, 0.4, 0.4));
  st.objects.push_back(
      make_object(ObjectClass::kPedestrian, 15.0, 17.0, 0, 1, 0.0, 0.4, 0.4));
  for (int n = 0; n < 10; ++n) {
    world_step(st, 0.1);
    CHECK(!st.objects[0].braking);
    CHECK(st.objects[0].speed == 4.0);
  }
}

TEST_CASE("route branches follow configured edge weights") {
  WorldConfig c = corridor_config();
  c.nodes = {{10, 16}, {30, 16}, {50, 16}, {30, 36}};
  c.edges = {{0, 1, 1.0}, {1, 2, 0.7}, {1, 3, 0.3}};
  WorldState st = make_world(c);

  const int trials = 1000;
  int straight = 0;
  for (int t = 0; t < trials; ++t) {
    st.objects.clear();
    SceneObject o =
        make_object(ObjectClass::kVehicle, 29.0, 16.0, 1, 0, 10.0, 1.0, 2.0);
    o.edge_to = 1;
    st.objects.push_back(o);
    world_step(st, 0.2);  // crosses the branch node and commits to an edge
    REQUIRE(st.objects.size() == 1);
    const int target = st.objects[0].edge_to;
    REQUIRE((target == 2 || target == 3));
    if (target == 2) ++straight;
  }
  // Binomial(1000, 0.7): sigma = 14.5, assert within 3 sigma.
  CHECK(std::fabs(straight - 700.0) <= 44.0);
}

TEST_CASE("raycast sees every cell of an empty world") {
  WorldConfig c;
  c.width = 32;
  c.height = 32;
  c.sensor_x = 16.5;
  c.sensor_y = 16.5;
  c.ray_step_deg = 0.25;
  WorldState st = make_world(c);
  const ViewMasks m = raycast_observe(st);
  for (int i = 0; i < 32; ++i) {
    for (int j = 0; j < 32; ++j) {
      CAPTURE(i);
      CAPTURE(j);
      CHECK(m.occupied[size_t(i) * 32 + j] == 0);
      CHECK(m.free[size_t(i) * 32 + j] == 1);
    }
  }
}

TEST_CASE("a wall hides the cells behind it") {
  WorldConfig c;
  c.width = 32;
  c.height = 32;
  c.sensor_x = 16.5;
  c.sensor_y = 16.5;
  c.ray_step_deg = 0.25;
  c.walls = {{24, 16, 25, 17}};  // single blocked cell at row 16, col 24
  WorldState st = make_world(c);
  const ViewMasks m = raycast_observe(st);
  auto at = [&](int i, int j) { return size_t(i) * 32 + j; };

  CHECK(m.occupied[at(16, 24)] == 1);
  CHECK(m.free[at(16, 23)] == 1);
  for (int j = 25; j < 32; ++j) {
    CAPTURE(j);
    CHECK(m.occupied[at(16, j)] == 0);  // shadowed: never observed
    CHECK(m.free[at(16, j)] == 0);
  }
}

TEST_CASE("exact ray traversal matches a brute-force visibility oracle") {
  WorldConfig c;
  c.width = 32;
  c.height = 32;
  c.sensor_x = 16.3;  // off-center so no ray hits a lattice corner exactly
  c.sensor_y = 16.7;
  c.walls = {{4, 4, 8, 6},    {20, 3, 23, 12}, {25, 20, 29, 24},
             {3, 22, 6, 30},  {12, 26, 20, 28}, {18, 14, 19, 15}};
  WorldState st = make_world(c);
  st.objects.push_back(make_object(ObjectClass::kVehicle, 10.2, 24.6,
                                   std::cos(0.436), std::sin(0.436), 2.0, 1.0,
                                   2.0));
  st.objects.push_back(
      make_object(ObjectClass::kPedestrian, 22.4, 22.3, 0, 1, 1.0, 1.2, 1.2));

  const std::vector<std::uint8_t> blocked = blocked_raster(st);
  for (double step : {1.0, 0.25}) {
    CAPTURE(step);
    st.cfg.ray_step_deg = step;
    const ViewMasks m = raycast_observe(st);
    const OracleView o = oracle_view(st.cfg, blocked);
    const std::set<size_t> got_occ = mask_set(m.occupied);
    const std::set<size_t> got_free = mask_set(m.free);
    CHECK(got_occ == o.occ);
    CHECK(got_free == o.free_cells);
    for (size_t idx : got_occ) CHECK(blocked[idx] == 1);
    for (size_t idx : got_free) CHECK(blocked[idx] == 0);
  }
}

TEST_CASE("sensor frames carry masses and warmed-up velocities") {
  WorldConfig c;
  c.width = 32;
  c.height = 32;
  c.sensor_x = 16.5;
  c.sensor_y = 16.5;
  c.ray_step_deg = 0.25;
  c.m_hit = 0.95;
  c.m_free = 0.9;
  c.sigma_v = 0.0;  // exact velocity channels
  c.n_warm = 3;
  c.v_max = 10.0;
  c.walls = {{24, 16, 25, 17}};
  WorldState st = make_world(c);
  // Visible vehicle west of the sensor, moving east at 2 cells/s.
  st.objects.push_back(
      make_object(ObjectClass::kVehicle, 10.5, 16.5, 1, 0, 2.0, 1.0, 2.0));
  // Pedestrian fully hidden behind the wall.
  st.objects.push_back(
      make_object(ObjectClass::kPedestrian, 28.5, 16.5, 0, 1, 1.0, 0.45, 0.45));

  auto at = [&](int i, int j) { return size_t(i) * 32 + j; };
  const ViewMasks masks = raycast_observe(st);
  CHECK(masks.occupied[at(16, 12)] == 1);  // vehicle's east face
  CHECK(masks.occupied[at(16, 24)] == 1);  // wall
  CHECK(masks.occupied[at(16, 28)] == 0);  // hidden pedestrian
  CHECK(masks.free[at(16, 28)] == 0);

  DogmaFrame f1 = render_dogma(st, masks);
  CHECK(st.objects[0].seen_frames == 1);
  CHECK(st.objects[1].seen_frames == 0);
  CHECK(f1.m_occ[at(16, 24)] == 0.95f);
  CHECK(f1.v_e[at(16, 24)] == 0.0f);  // statics carry no velocity
  CHECK(f1.m_free[at(16, 20)] == 0.9f);
  CHECK(f1.v_e[at(16, 12)] == 0.0f);  // 1 frame seen < n_warm

  DogmaFrame f2 = render_dogma(st, masks);
  CHECK(f2.v_e[at(16, 12)] == 0.0f);  // 2 frames seen < n_warm

  DogmaFrame f3 = render_dogma(st, masks);
  CHECK(st.objects[0].seen_frames == 3);
  CHECK(f3.v_e[at(16, 12)] == 0.2f);  // speed 2 east / v_max 10
  CHECK(f3.v_n[at(16, 12)] == 0.0f);

  // Unobserved cell: both masses zero, probability reads 0.5.
  CHECK(f3.m_occ[at(16, 28)] == 0.0f);
  CHECK(f3.m_free[at(16, 28)] == 0.0f);
  CHECK(occupancy_probability(f3.m_occ[at(16, 28)], f3.m_free[at(16, 28)]) ==
        0.5f);

  for (size_t i = 0; i < f3.m_occ.size(); ++i) {
    CHECK(f3.m_occ[i] + f3.m_free[i] <= 1.0f);
    if (f3.m_occ[i] == 0.0f) {
      CHECK(f3.v_e[i] == 0.0f);
      CHECK(f3.v_n[i] == 0.0f);
    }
  }

  // Labels come from unoccluded geometry: the hidden pedestrian is present.
  const LabelFrame lab = render_labels(st);
  CHECK(lab.y_static[at(16, 24)] == 1.0f);
  CHECK(lab.y_dynamic[at(16, 28)] > 0.0f);
  CHECK(lab.y_dynamic[at(16, 12)] > 0.0f);

  ViewMasks bad = masks;
  bad.height = 31;
  CHECK_THROWS_AS(render_dogma(st, bad), DataError);
}

TEST_CASE("static labels are exact wall coverage") {
  WorldConfig c;
  c.width = 32;
  c.height = 32;
  c.sensor_x = 16.5;
  c.sensor_y = 16.5;
  c.walls = {{10.25, 5.5, 11.75, 6.5}};
  WorldState st = make_world(c);
  const LabelFrame lab = render_labels(st);
  auto at = [&](int i, int j) { return size_t(i) * 32 + j; };
  // 1.5 x 1.0 wall split over four cells, 0.75 x 0.5 overlap each.
  CHECK(lab.y_static[at(5, 10)] == 0.375f);
  CHECK(lab.y_static[at(5, 11)] == 0.375f);
  CHECK(lab.y_static[at(6, 10)] == 0.375f);
  CHECK(lab.y_static[at(6, 11)] == 0.375f);
  float total = 0.0f;
  for (float v : lab.y_static) total += v;
  CHECK(total == 1.5f);  // area bookkeeping, exact for axis-aligned walls
  for (float v : lab.y_dynamic) CHECK(v == 0.0f);
}

TEST_CASE("dynamic label mass equals footprint area") {
  WorldConfig c;
  c.width = 32;
  c.height = 32;
  c.sensor_x = 16.5;
  c.sensor_y = 16.5;
  WorldState st = make_world(c);
  auto label_sum = [&]() {
    const LabelFrame lab = render_labels(st);
    double s = 0.0;
    for (float v : lab.y_dynamic) s += v;
    return s;
  };

  // Disk of radius 2: area 4*pi.
  st.objects = {
      make_object(ObjectClass::kPedestrian, 16.5, 16.5, 1, 0, 0.0, 2.0, 2.0)};
  CHECK(label_sum() == doctest::Approx(4.0 * kTau / 2.0).epsilon(0.02));

  // Rotated 2x4 rectangle: area 8.
  st.objects = {make_object(ObjectClass::kVehicle, 16.5, 16.5, std::cos(0.7),
                            std::sin(0.7), 0.0, 1.0, 2.0)};
  CHECK(label_sum() == doctest::Approx(8.0).epsilon(0.02));

  // Overlapping disks label union coverage, not additive mass.
  st.objects = {
      make_object(ObjectClass::kPedestrian, 16.5, 16.5, 1, 0, 0.0, 2.0, 2.0),
      make_object(ObjectClass::kPedestrian, 17.5, 16.5, 1, 0, 0.0, 2.0, 2.0)};
  // two radius-2 circles, centers 1 apart: union = 8*pi - lens overlap
  const double lens = 8.0 * std::acos(0.25) - 0.5 * std::sqrt(15.0);
  CHECK(label_sum() == doctest::Approx(4.0 * kTau - lens).epsilon(0.02));
}

TEST_CASE("spawner saturation is counted, not fatal") {
  WorldConfig c = corridor_config();
  SpawnerSpec s;
  s.cls = ObjectClass::kVehicle;
  s.rate_hz = 10.0;  // fires every step at 10 Hz
  s.speed_min = 2.0;
  s.speed_max = 4.0;
  s.entry_node = 0;
  s.half_w = 0.8;
  s.half_l = 1.6;
  c.spawners = {s};
  c.frame_rate = 10.0;
  WorldState st = make_world(c);
  for (int n = 0; n < 6; ++n) world_step(st, 0.1);
  // First spawn lands; the entry stays blocked for the rest of the steps.
  CHECK(st.objects.size() == 1);
  CHECK(st.spawn_rejections == 5);
  CHECK(st.objects[0].cruise_speed >= 2.0);
  CHECK(st.objects[0].cruise_speed <= 4.0);
}

namespace {

// Crossing lanes with walls: vehicles run west-east, pedestrians south-north
// through the vehicle corridor, so braking interactions occur organically.
WorldConfig traffic_config() {
  WorldConfig c;
  c.width = 32;
  c.height = 32;
  c.cell_size = 0.25;
  c.sensor_x = 16.5;
  c.sensor_y = 16.5;
  c.ray_step_deg = 1.0;
  c.sigma_v = 0.1;
  c.preroll = 3;
  c.seed = 11;
  c.walls = {{8, 8, 12, 10}, {20, 20, 24, 22}};
  c.nodes = {{2, 16.5}, {30, 16.5}, {16.5, 2}, {16.5, 30}};
  c.edges = {{0, 1, 1.0}, {2, 3, 1.0}};
  SpawnerSpec veh;
  veh.cls = ObjectClass::kVehicle;
  veh.rate_hz = 4.0;
  veh.speed_min = 2.0;
  veh.speed_max = 4.0;
  veh.entry_node = 0;
  veh.half_w = 0.8;
  veh.half_l = 1.6;
  SpawnerSpec ped;
  ped.cls = ObjectClass::kPedestrian;
  ped.rate_hz = 3.0;
  ped.speed_min = 1.0;
  ped.speed_max = 2.0;
  ped.entry_node = 2;
  ped.half_w = 0.4;
  ped.half_l = 0.4;
  c.spawners = {veh, ped};
  return c;
}

}  // namespace

TEST_CASE("world stepping keeps objects continuous and bounded") {
  WorldState st = make_world(traffic_config());
  std::set<int> all_ids;
  for (int n = 0; n < 60; ++n) {
    std::map<int, std::pair<double, double>> before;
    for (const SceneObject& o : st.objects) before[o.id] = {o.x, o.y};
    world_step(st, 0.1);
    for (const SceneObject& o : st.objects) {
      CHECK(!all_ids.count(o.id) == !before.count(o.id));  // ids never reused
      all_ids.insert(o.id);
      CHECK(o.speed <= o.cruise_speed + 1e-12);
      CHECK(o.cruise_speed <= st.cfg.v_max);
      auto it = before.find(o.id);
      if (it == before.end()) continue;  // spawned this step
      const double dx = o.x - it->second.first, dy = o.y - it->second.second;
      CHECK(std::hypot(dx, dy) <= st.cfg.v_max * 0.1 + 1e-9);
    }
  }
  CHECK(all_ids.size() > 10);  // traffic actually flowed
}

TEST_CASE("datasets count, split, replay and stay self-consistent") {
  const WorldConfig c = traffic_config();
  const fs::path base = fs::temp_directory_path() / "gpm_simworld_test";
  fs::remove_all(base);
  const std::string dir_a = (base / "a").string();
  const std::string dir_b = (base / "b").string();
  const std::string dir_c = (base / "c").string();

  CHECK_THROWS_AS(generate_dataset(c, 0, dir_a), ConfigError);

  const DatasetManifest man = generate_dataset(c, 100, dir_a);
  CHECK(man.frame_count == 100);
  CHECK(man.split_index == 80);  // first 80% train, rest test
  CHECK(man.seed == 11);
  CHECK(man.width == 32);
  CHECK(man.height == 32);
  CHECK(man.frame_rate == 10.0);

  KeyValueConfig ckv;
  world_config_to(c, ckv);
  CHECK(man.config_hash == fnv1a_hex(ckv.canonical()));

  int ogt_files = 0;
  for (const auto& e : fs::directory_iterator(dir_a)) {
    if (e.path().extension() == ".ogt") ++ogt_files;
  }
  CHECK(ogt_files == 300);  // dogma + slabel + dlabel per frame
  CHECK(fs::exists(fs::path(dir_a) / "manifest.txt"));

  const DatasetManifest back = read_manifest(dir_a);
  CHECK(back.frame_count == man.frame_count);
  CHECK(back.split_index == man.split_index);
  CHECK(back.seed == man.seed);
  CHECK(back.config_hash == man.config_hash);
  CHECK(back.width == man.width);
  CHECK(back.height == man.height);
  CHECK(back.frame_rate == man.frame_rate);
  CHECK(back.v_max == man.v_max);
  CHECK(back.cell_size == man.cell_size);

  // Same config, fresh run: bit-identical files.
  generate_dataset(c, 100, dir_b);
  for (int i = 0; i < 100; ++i) {
    for (const char* kind : {"dogma", "slabel", "dlabel"}) {
      CAPTURE(i);
      CAPTURE(kind);
      CHECK(slurp(dataset_frame_path(dir_a, i, kind)) ==
            slurp(dataset_frame_path(dir_b, i, kind)));
    }
  }
  CHECK(slurp(dir_a + "/manifest.txt") == slurp(dir_b + "/manifest.txt"));

  // Different seed: the stream diverges somewhere.
  WorldConfig c2 = c;
  c2.seed = 12;
  generate_dataset(c2, 100, dir_c);
  bool any_differ = false;
  for (int i = 0; i < 100 && !any_differ; ++i) {
    any_differ = slurp(dataset_frame_path(dir_a, i, "dogma")) !=
                 slurp(dataset_frame_path(dir_c, i, "dogma"));
  }
  CHECK(any_differ);

  // Per-frame invariants on a sample of stored frames.
  for (int i : {0, 25, 50, 75, 99}) {
    CAPTURE(i);
    const OgtTensor dt = read_ogt(dataset_frame_path(dir_a, i, "dogma"));
    REQUIRE(dt.dims == std::vector<int>{32, 32, 4});
    const DogmaFrame f = dogma_from_ogt(dt);
    const OgtTensor ys = read_ogt(dataset_frame_path(dir_a, i, "slabel"));
    const OgtTensor yd = read_ogt(dataset_frame_path(dir_a, i, "dlabel"));
    REQUIRE(ys.dims == std::vector<int>{32, 32});
    REQUIRE(yd.dims == std::vector<int>{32, 32});
    for (size_t k = 0; k < f.m_occ.size(); ++k) {
      CHECK(f.m_occ[k] + f.m_free[k] <= 1.0f);
      CHECK(std::fabs(f.v_e[k]) <= 1.0f);
      CHECK(std::fabs(f.v_n[k]) <= 1.0f);
      if (f.m_occ[k] == 0.0f) {
        CHECK(f.v_e[k] == 0.0f);
        CHECK(f.v_n[k] == 0.0f);
      }
      CHECK(ys.data[k] >= 0.0f);
      CHECK(ys.data[k] <= 1.0f);
      CHECK(yd.data[k] >= 0.0f);
      CHECK(yd.data[k] <= 1.0f);
      // Observed-occupied cells must be explained by some label mass.
      if (occupancy_probability(f.m_occ[k], f.m_free[k]) > 0.5f) {
        CHECK(ys.data[k] + yd.data[k] > 0.0f);
      }
    }
  }

  CHECK_THROWS(read_manifest((base / "missing").string()));
  fs::remove_all(base);
}

TEST_CASE("dataset frame paths are zero padded") {
  CHECK(dataset_frame_path("d", 7, "dogma") == "d/frame_000007.dogma.ogt");
  CHECK(dataset_frame_path("d", 123456, "slabel") ==
        "d/frame_123456.slabel.ogt");
}
