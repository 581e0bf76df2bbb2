#include "gpm/scenarios.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gpm/errors.hpp"
#include "gpm/eval.hpp"
#include "gpm/model.hpp"

namespace gpm {
namespace {

// Horizon the cross-model comparisons quote; the nearest configured horizon
// is used when no exact match exists.
constexpr float kTargetHorizon = 1.5f;
// Label coverage above which a cell counts as part of a true footprint. Low
// enough that a pedestrian-sized disk always owns at least its center cell.
constexpr float kFootprintCoverage = 0.3f;
// Seconds between the last sighting and the prediction instant in the
// full-occlusion script.
constexpr double kOcclusionLead = 0.5;

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Scripted-world plumbing.

WorldConfig scripted_copy(const WorldConfig& base) {
  base.validate();
  WorldConfig wc = base;
  for (SpawnerSpec& s : wc.spawners) s.rate_hz = 0.0;  // script owns the cast
  wc.preroll = 0;
  return wc;
}

void check_grid(const Checkpoint& ck, const WorldConfig& wc,
                const char* which) {
  if (ck.config.height != wc.height || ck.config.width != wc.width) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%s checkpoint grid %dx%d does not match world grid %dx%d",
                  which, ck.config.height, ck.config.width, wc.height,
                  wc.width);
    throw ConfigError(buf);
  }
}

const SpawnerSpec& spawner_of(const WorldConfig& wc, ObjectClass cls) {
  for (const SpawnerSpec& s : wc.spawners) {
    if (s.cls == cls) return s;
  }
  throw DataError("world defines no " + object_class_name(cls) + " spawner");
}

std::vector<int> edges_from(const WorldConfig& wc, int node) {
  std::vector<int> out;
  for (size_t i = 0; i < wc.edges.size(); ++i) {
    if (wc.edges[i].from == node) out.push_back(int(i));
  }
  return out;
}

// Node sequence from `entry` following single-exit edges; stops at the first
// branch (kept as the last node) or at a dead end.
struct RoutePath {
  std::vector<int> node_seq;
  int branch_node = -1;  // last node when it has >= 2 outgoing edges
};

RoutePath walk_route(const WorldConfig& wc, int entry) {
  RoutePath rp;
  rp.node_seq.push_back(entry);
  std::vector<char> seen(wc.nodes.size(), 0);
  seen[size_t(entry)] = 1;
  int cur = entry;
  while (true) {
    const std::vector<int> out = edges_from(wc, cur);
    if (out.empty()) break;
    if (out.size() >= 2) {
      rp.branch_node = cur;
      break;
    }
    cur = wc.edges[size_t(out[0])].to;
    if (seen[size_t(cur)]) break;  // cycle guard
    seen[size_t(cur)] = 1;
    rp.node_seq.push_back(cur);
  }
  return rp;
}

double polyline_length(const WorldConfig& wc, const std::vector<int>& seq) {
  double len = 0.0;
  for (size_t k = 1; k < seq.size(); ++k) {
    const RouteNode& a = wc.nodes[size_t(seq[k - 1])];
    const RouteNode& b = wc.nodes[size_t(seq[k])];
    len += std::hypot(b.x - a.x, b.y - a.y);
  }
  return len;
}

int add_actor(WorldState& st, const SpawnerSpec& sp, double x, double y,
              double dir_x, double dir_y, double speed, int edge_to) {
  SceneObject o;
  o.id = st.next_id++;
  o.cls = sp.cls;
  o.half_w = sp.half_w;
  o.half_l = sp.half_l;
  o.x = x;
  o.y = y;
  o.dir_x = dir_x;
  o.dir_y = dir_y;
  o.speed = speed;
  o.cruise_speed = speed;
  o.edge_to = edge_to;
  st.objects.push_back(o);
  return o.id;
}

// Places an actor at the route entry node heading down the first edge.
int add_actor_at_entry(WorldState& st, const SpawnerSpec& sp, double speed) {
  const WorldConfig& wc = st.cfg;
  const std::vector<int> out = edges_from(wc, sp.entry_node);
  if (out.empty()) throw DataError("scenario entry node has no outgoing edge");
  const RouteEdge& e = wc.edges[size_t(out[0])];
  const RouteNode& a = wc.nodes[size_t(e.from)];
  const RouteNode& b = wc.nodes[size_t(e.to)];
  const double d = std::hypot(b.x - a.x, b.y - a.y);
  return add_actor(st, sp, a.x, a.y, (b.x - a.x) / d, (b.y - a.y) / d, speed,
                   e.to);
}

double mid_speed(const SpawnerSpec& sp) {
  return 0.5 * (sp.speed_min + sp.speed_max);
}

// Everything a script needs per simulated frame; `states` snapshots are
// taken after rendering (observation counters settled) and before stepping,
// so states[k] continues exactly from frame k.
struct Trace {
  std::vector<DogmaFrame> dogma;
  std::vector<LabelFrame> labels;
  std::vector<ViewMasks> masks;
  std::vector<WorldState> states;
};

Trace roll_trace(WorldState st, int n_frames, double dt) {
  Trace tr;
  tr.dogma.reserve(size_t(n_frames));
  tr.labels.reserve(size_t(n_frames));
  tr.masks.reserve(size_t(n_frames));
  tr.states.reserve(size_t(n_frames));
  for (int k = 0; k < n_frames; ++k) {
    const ViewMasks m = raycast_observe(st);
    tr.dogma.push_back(render_dogma(st, m));
    tr.labels.push_back(render_labels(st));
    tr.masks.push_back(m);
    tr.states.push_back(st);
    world_step(st, dt);
  }
  return tr;
}

std::vector<LabelFrame> continue_labels(WorldState st,
                                        const std::vector<int>& offsets,
                                        double dt) {
  std::vector<LabelFrame> out;
  out.reserve(offsets.size());
  int done = 0;
  for (int target : offsets) {
    assert(target >= done);  // offsets ascend by construction
    while (done < target) {
      world_step(st, dt);
      ++done;
    }
    out.push_back(render_labels(st));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model plumbing.

std::vector<int> model_offsets(const GpmConfig& gc, double frame_rate) {
  std::vector<int> off;
  off.reserve(size_t(gc.n_pred));
  for (int i = 1; i <= gc.n_pred; ++i) {
    off.push_back(label_offset(i, gc.dt_pred, frame_rate));
  }
  return off;
}

PredictionBundle forward_at(const Checkpoint& ck,
                            const std::vector<DogmaFrame>& dogma, int t0) {
  if (t0 + 1 < ck.config.n_in || t0 >= int(dogma.size())) {
    throw DataError("scenario window does not fit the rolled trace");
  }
  std::vector<Tensor> in;
  in.reserve(size_t(ck.config.n_in));
  for (int k = t0 - ck.config.n_in + 1; k <= t0; ++k) {
    in.push_back(to_input_tensor(dogma[size_t(k)], ck.config.input_channels));
  }
  std::mt19937_64 rng(0);  // inference: dropout inactive, rng never drawn
  return gpm_forward(in, ck.params, ck.config, false, rng);
}

int pick_horizon(const std::vector<float>& horizons_s) {
  int best = 0;
  for (size_t i = 1; i < horizons_s.size(); ++i) {
    if (std::fabs(horizons_s[i] - kTargetHorizon) <=
        std::fabs(horizons_s[size_t(best)] - kTargetHorizon)) {
      best = int(i);
    }
  }
  return best;
}

double footprint_mean(const Tensor& raster, const LabelFrame& truth,
                      const char* scen) {
  const std::vector<float>& v = raster.data();
  double sum = 0.0;
  int n = 0;
  for (size_t c = 0; c < truth.y_dynamic.size(); ++c) {
    if (truth.y_dynamic[c] > kFootprintCoverage) {
      sum += v[c];
      ++n;
    }
  }
  if (n == 0) {
    throw DataError(std::string(scen) +
                    ": true footprint empty at the comparison horizon");
  }
  return sum / n;
}

// ---------------------------------------------------------------------------
// Visibility bookkeeping.

int object_index(const WorldState& st, int id) {
  for (size_t i = 0; i < st.objects.size(); ++i) {
    if (st.objects[i].id == id) return int(i);
  }
  return -1;
}

// Counts the actor's owned cells split into sensor-observed and hidden.
struct VisibleSplit {
  int visible = 0;
  int hidden = 0;
  bool alive = false;
};

VisibleSplit visible_split(const WorldState& st, const ViewMasks& m, int id) {
  VisibleSplit vs;
  const int idx = object_index(st, id);
  if (idx < 0) return vs;
  vs.alive = true;
  const std::vector<int> owner = object_owner(st);
  for (size_t c = 0; c < owner.size(); ++c) {
    if (owner[c] != idx) continue;
    if (m.occupied[c]) {
      ++vs.visible;
    } else {
      ++vs.hidden;
    }
  }
  return vs;
}

// ---------------------------------------------------------------------------
// Output plumbing.

std::string horizon_key(const char* stem, int i) {
  return std::string(stem) + "_h" + std::to_string(i + 1);
}

void push(ScenarioResult& r, const std::string& name, double value) {
  r.metrics.push_back(ScenarioMetric{name, value});
}

// prediction vs truth pixmap; silently skipped when out_dir is empty.
void emit_pixmap(ScenarioResult& r, const std::string& out_dir,
                 const std::string& stem, const std::vector<float>& pred,
                 const std::vector<float>& truth, int height, int width) {
  if (out_dir.empty()) return;
  fs::create_directories(out_dir);
  const std::string path = out_dir + "/" + stem + ".ppm";
  write_pixmap(render_comparison(pred, truth, height, width), path);
  r.artifacts.push_back(path);
}

std::vector<float> dynamic_truth(const LabelFrame& lf) { return lf.y_dynamic; }

// Shared skeleton of the two footprint-occupancy scripts: roll one actor
// down its route, pick the prediction instant with `pick_t0`, compare both
// models' dynamic output against the true footprint at the target horizon.
template <typename PickT0>
ScenarioResult occlusion_footprint_script(
    const char* name, const Checkpoint& ff, const Checkpoint& rec,
    const WorldConfig& base, ObjectClass cls, double half_l_scale,
    const std::string& out_dir, PickT0 pick_t0) {
  const WorldConfig wc = scripted_copy(base);
  check_grid(ff, wc, "feedforward");
  check_grid(rec, wc, "recurrent");
  const double dt = 1.0 / wc.frame_rate;

  SpawnerSpec sp = spawner_of(wc, cls);
  sp.half_l *= half_l_scale;
  WorldState st = make_world(wc);
  const double speed = mid_speed(sp);
  const int id = add_actor_at_entry(st, sp, speed);

  const RoutePath route = walk_route(wc, sp.entry_node);
  const int max_off = std::max(model_offsets(ff.config, wc.frame_rate).back(),
                               model_offsets(rec.config, wc.frame_rate).back());
  const int n_need = std::max(ff.config.n_in, rec.config.n_in);
  const double len = polyline_length(wc, route.node_seq);
  const int budget = std::min(
      600, int(std::ceil(len / speed * wc.frame_rate)) + max_off + 8);

  const Trace tr = roll_trace(std::move(st), budget, dt);

  std::vector<VisibleSplit> vis(tr.states.size());
  for (size_t k = 0; k < tr.states.size(); ++k) {
    vis[k] = visible_split(tr.states[k], tr.masks[k], id);
  }
  const int t0 = pick_t0(vis, n_need);
  if (t0 < 0 || t0 + max_off >= int(tr.dogma.size())) {
    throw DataError(std::string(name) +
                    ": no admissible prediction instant on this world");
  }

  ScenarioResult r;
  r.name = name;
  push(r, "t0_frame", t0);
  push(r, "visible_cells", vis[size_t(t0)].visible);
  push(r, "hidden_cells", vis[size_t(t0)].hidden);

  const Checkpoint* models[2] = {&ff, &rec};
  const char* tags[2] = {"ff", "rec"};
  for (int m = 0; m < 2; ++m) {
    const Checkpoint& ck = *models[m];
    const PredictionBundle bundle = forward_at(ck, tr.dogma, t0);
    const int h = pick_horizon(bundle.horizons_s);
    const int off = model_offsets(ck.config, wc.frame_rate)[size_t(h)];
    const LabelFrame& truth = tr.labels[size_t(t0 + off)];
    push(r, std::string(tags[m]) + "_footprint_mean",
         footprint_mean(bundle.y_dyn[size_t(h)], truth, name));
    if (m == 0) push(r, "horizon_s", bundle.horizons_s[size_t(h)]);
    emit_pixmap(r, out_dir, std::string(name) + "_" + tags[m],
                bundle.y_dyn[size_t(h)].data(), dynamic_truth(truth),
                wc.height, wc.width);
  }
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------

void inject_disk(DogmaFrame& frame, double cx, double cy, double radius,
                 double vx, double vy, double m_hit, double v_max) {
  if (radius <= 0 || m_hit < 0 || m_hit > 1 || v_max <= 0) {
    throw ConfigError("inject_disk: bad disk parameters");
  }
  const int i0 = std::max(0, int(std::floor(cy - radius)));
  const int i1 = std::min(frame.height - 1, int(std::floor(cy + radius)));
  const int j0 = std::max(0, int(std::floor(cx - radius)));
  const int j1 = std::min(frame.width - 1, int(std::floor(cx + radius)));
  const float ve = float(std::max(-1.0, std::min(1.0, vx / v_max)));
  const float vn = float(std::max(-1.0, std::min(1.0, vy / v_max)));
  for (int i = i0; i <= i1; ++i) {
    for (int j = j0; j <= j1; ++j) {
      const double dx = (j + 0.5) - cx, dy = (i + 0.5) - cy;
      if (dx * dx + dy * dy > radius * radius) continue;
      const size_t c = size_t(i) * frame.width + j;
      frame.m_occ[c] = float(m_hit);
      frame.m_free[c] = 0.0f;
      frame.v_e[c] = ve;
      frame.v_n[c] = vn;
    }
  }
}

double ScenarioResult::metric(const std::string& key) const {
  for (const ScenarioMetric& m : metrics) {
    if (m.name == key) return m.value;
  }
  throw DataError("scenario " + name + " has no metric " + key);
}

double ScenarioReport::metric(const std::string& name,
                              const std::string& key) const {
  for (const ScenarioResult& r : results) {
    if (r.name == name) return r.metric(key);
  }
  throw DataError("report has no scenario " + name);
}

ScenarioResult run_occluded_vehicle(const Checkpoint& feedforward,
                                    const Checkpoint& recurrent,
                                    const WorldConfig& world,
                                    const std::string& out_dir) {
  // Prediction instant: the first frame where the actor is mostly hidden yet
  // a sparse silhouette remains observed.
  return occlusion_footprint_script(
      "occluded_vehicle", feedforward, recurrent, world,
      ObjectClass::kVehicle, 1.0, out_dir,
      [](const std::vector<VisibleSplit>& vis, int n_need) {
        int first_partial = -1;
        for (int k = std::max(1, n_need - 1); k < int(vis.size()); ++k) {
          const VisibleSplit& v = vis[size_t(k)];
          if (!v.alive || v.visible == 0 || v.hidden == 0) continue;
          if (first_partial < 0) first_partial = k;
          if (v.hidden >= v.visible) return k;
        }
        return first_partial;  // coarse shadows may never hide the majority
      });
}

ScenarioResult run_occluded_pedestrian(const Checkpoint& feedforward,
                                       const Checkpoint& recurrent,
                                       const WorldConfig& world,
                                       const std::string& out_dir) {
  // Prediction instant: a fixed lead after the actor vanishes entirely,
  // provided it is still hidden then.
  const int lead = std::max(1, int(std::lround(kOcclusionLead *
                                               world.frame_rate)));
  return occlusion_footprint_script(
      "occluded_pedestrian", feedforward, recurrent, world,
      ObjectClass::kPedestrian, 1.0, out_dir,
      [lead](const std::vector<VisibleSplit>& vis, int n_need) {
        for (int k = std::max(1, n_need); k < int(vis.size()); ++k) {
          const bool onset = vis[size_t(k - 1)].visible > 0 &&
                             vis[size_t(k)].alive &&
                             vis[size_t(k)].visible == 0;
          if (!onset) continue;
          const int t0 = k + lead;
          if (t0 >= int(vis.size())) break;
          const VisibleSplit& v = vis[size_t(t0)];
          // Still fully hidden after the lead; otherwise try a later onset.
          if (v.alive && v.visible == 0 && v.hidden > 0) return t0;
        }
        return -1;
      });
}

ScenarioResult run_occluded_static(const Checkpoint& feedforward,
                                   const Checkpoint& recurrent,
                                   const WorldConfig& world,
                                   const std::string& out_dir) {
  const WorldConfig wc = scripted_copy(world);
  check_grid(feedforward, wc, "feedforward");
  check_grid(recurrent, wc, "recurrent");
  const double dt = 1.0 / wc.frame_rate;

  // Oversized trailer so the swept shadow dwarfs the per-frame one.
  SpawnerSpec sp = spawner_of(wc, ObjectClass::kVehicle);
  sp.half_l *= 1.7;
  WorldState st = make_world(wc);
  const double speed = mid_speed(sp);
  add_actor_at_entry(st, sp, speed);

  const RoutePath route = walk_route(wc, sp.entry_node);
  const double len = polyline_length(wc, route.node_seq);
  const int budget =
      std::min(600, int(std::ceil(len / speed * wc.frame_rate)) + 8);
  const Trace tr = roll_trace(std::move(st), budget, dt);

  // Wall cells hidden now but sensor-observed earlier inside the input
  // window of BOTH models; the instant maximizing that count is scored.
  // Candidates come from the blocked-geometry raster: only a wall's sensor-
  // facing surface is ever observable, whatever its label coverage.
  const size_t cells = tr.labels[0].y_static.size();
  const int n_need =
      std::max(feedforward.config.n_in, recurrent.config.n_in);
  const int lookback =
      std::min(feedforward.config.n_in, recurrent.config.n_in);
  const std::vector<std::uint8_t> wall = static_blocked(wc);
  const auto observed = [&](int k, size_t c) {
    return tr.masks[size_t(k)].occupied[c] || tr.masks[size_t(k)].free[c];
  };
  int t0 = -1;
  std::vector<char> region(cells, 0), best_region;
  int best = 0;
  for (int k = n_need - 1; k < int(tr.masks.size()); ++k) {
    int count = 0;
    for (size_t c = 0; c < cells; ++c) {
      region[c] = 0;
      if (!wall[c] || observed(k, c)) continue;
      for (int back = k - lookback + 1; back < k; ++back) {
        if (observed(back, c)) {
          region[c] = 1;
          ++count;
          break;
        }
      }
    }
    if (count > best) {
      best = count;
      best_region = region;
      t0 = k;
    }
  }
  if (t0 < 0) {
    throw DataError(
        "occluded_static: the vehicle never hides previously observed "
        "structure");
  }

  ScenarioResult r;
  r.name = "occluded_static";
  push(r, "t0_frame", t0);
  push(r, "region_cells", best);

  const Checkpoint* models[2] = {&feedforward, &recurrent};
  const char* tags[2] = {"ff", "rec"};
  for (int m = 0; m < 2; ++m) {
    const PredictionBundle bundle = forward_at(*models[m], tr.dogma, t0);
    const std::vector<float>& stat = bundle.y_stat.data();
    double sum = 0.0;
    for (size_t c = 0; c < cells; ++c) {
      if (best_region[c]) sum += stat[c];
    }
    push(r, std::string(tags[m]) + "_static_mean", sum / best);
    emit_pixmap(r, out_dir, std::string("occluded_static_") + tags[m], stat,
                tr.labels[size_t(t0)].y_static, wc.height, wc.width);
  }
  return r;
}

ScenarioResult run_multimodal_turn(const Checkpoint& ck,
                                   const WorldConfig& world,
                                   const std::string& out_dir) {
  const WorldConfig wc = scripted_copy(world);
  check_grid(ck, wc, "interaction");
  const double dt = 1.0 / wc.frame_rate;
  const GpmConfig& gc = ck.config;

  const SpawnerSpec& sp = spawner_of(wc, ObjectClass::kVehicle);
  const RoutePath route = walk_route(wc, sp.entry_node);
  if (route.branch_node < 0) {
    throw DataError("multimodal_turn: vehicle route has no branch");
  }
  if (route.node_seq.size() < 2) {
    throw DataError("multimodal_turn: route enters at the branch itself");
  }
  const RouteNode& branch = wc.nodes[size_t(route.branch_node)];
  const RouteNode& prev =
      wc.nodes[size_t(route.node_seq[route.node_seq.size() - 2])];
  const double seg = std::hypot(branch.x - prev.x, branch.y - prev.y);
  const double ux = (branch.x - prev.x) / seg, uy = (branch.y - prev.y) / seg;

  // At t0 the vehicle sits just short of the branch; the injection point is
  // backed off so the whole input window fits on the approach segment.
  const double speed = mid_speed(sp);
  const double gap = 1.5;
  const double back = gap + speed * (gc.n_in - 1) * dt;
  if (back > seg - 0.5) {
    throw DataError("multimodal_turn: approach segment too short for the "
                    "input window");
  }
  WorldState st = make_world(wc);
  const int id = add_actor(st, sp, branch.x - ux * back, branch.y - uy * back,
                           ux, uy, speed, route.branch_node);
  const int t0 = gc.n_in - 1;
  const Trace tr = roll_trace(std::move(st), gc.n_in, dt);
  if (!visible_split(tr.states[size_t(t0)], tr.masks[size_t(t0)], id).alive) {
    throw DataError("multimodal_turn: vehicle left the world before t0");
  }

  const PredictionBundle bundle = forward_at(ck, tr.dogma, t0);
  const std::vector<int> offsets = model_offsets(gc, wc.frame_rate);

  // Ground truth forced down each arm: prune the other branch edges from a
  // continuation of the exact world state at t0. Objects reference nodes,
  // not edge indices, so pruning is safe.
  const std::vector<int> arms = edges_from(wc, route.branch_node);
  int straight_edge = arms[0], turn_edge = arms[0];
  double best_dot = -2.0, worst_dot = 2.0;
  for (int e : arms) {
    const RouteNode& to = wc.nodes[size_t(wc.edges[size_t(e)].to)];
    const double d = std::hypot(to.x - branch.x, to.y - branch.y);
    const double dot = ((to.x - branch.x) * ux + (to.y - branch.y) * uy) / d;
    if (dot > best_dot) {
      best_dot = dot;
      straight_edge = e;
    }
    if (dot < worst_dot) {
      worst_dot = dot;
      turn_edge = e;
    }
  }
  const auto forced = [&](int keep) {
    WorldState s = tr.states[size_t(t0)];
    std::vector<RouteEdge> kept;
    for (size_t i = 0; i < s.cfg.edges.size(); ++i) {
      if (s.cfg.edges[i].from == route.branch_node && int(i) != keep) continue;
      kept.push_back(s.cfg.edges[i]);
    }
    s.cfg.edges = std::move(kept);
    return continue_labels(std::move(s), offsets, dt);
  };
  const std::vector<LabelFrame> gt_straight = forced(straight_edge);
  const std::vector<LabelFrame> gt_turn = forced(turn_edge);

  ScenarioResult r;
  r.name = "multimodal_turn";
  push(r, "t0_frame", t0);
  for (int i = 0; i < gc.n_pred; ++i) {
    const std::vector<float>& dyn = bundle.y_dyn[size_t(i)].data();
    const float peak = *std::max_element(dyn.begin(), dyn.end());
    const int comps =
        peak > 0.0f
            ? connected_components(threshold_raster(dyn, 0.5f * peak),
                                   wc.height, wc.width)
            : 0;
    push(r, horizon_key("components", i), comps);

    const std::vector<float> base = raster_to_float(baseline_constant_velocity(
        tr.dogma[size_t(t0)], bundle.horizons_s[size_t(i)], wc.v_max));
    push(r, horizon_key("mse_model_turn", i),
         mean_squared_error(dyn, gt_turn[size_t(i)].y_dynamic));
    push(r, horizon_key("mse_baseline_turn", i),
         mean_squared_error(base, gt_turn[size_t(i)].y_dynamic));
    push(r, horizon_key("mse_model_straight", i),
         mean_squared_error(dyn, gt_straight[size_t(i)].y_dynamic));
    push(r, horizon_key("mse_baseline_straight", i),
         mean_squared_error(base, gt_straight[size_t(i)].y_dynamic));
    emit_pixmap(r, out_dir, horizon_key("multimodal_turn", i), dyn,
                dynamic_truth(gt_turn[size_t(i)]), wc.height, wc.width);
  }
  return r;
}

ScenarioResult run_crossing_interaction(const Checkpoint& ck,
                                        const WorldConfig& world,
                                        const std::string& out_dir) {
  const WorldConfig wc = scripted_copy(world);
  check_grid(ck, wc, "interaction");
  const double dt = 1.0 / wc.frame_rate;
  const GpmConfig& gc = ck.config;

  const SpawnerSpec& vsp = spawner_of(wc, ObjectClass::kVehicle);
  const SpawnerSpec& psp = spawner_of(wc, ObjectClass::kPedestrian);
  const RoutePath vroute = walk_route(wc, vsp.entry_node);
  const RoutePath proute = walk_route(wc, psp.entry_node);

  // First crossing between the two route polylines.
  double cx = 0, cy = 0;
  int vseg = -1, pseg = -1;
  for (size_t a = 1; a < vroute.node_seq.size() && vseg < 0; ++a) {
    const RouteNode& a0 = wc.nodes[size_t(vroute.node_seq[a - 1])];
    const RouteNode& a1 = wc.nodes[size_t(vroute.node_seq[a])];
    for (size_t b = 1; b < proute.node_seq.size(); ++b) {
      const RouteNode& b0 = wc.nodes[size_t(proute.node_seq[b - 1])];
      const RouteNode& b1 = wc.nodes[size_t(proute.node_seq[b])];
      const double rx = a1.x - a0.x, ry = a1.y - a0.y;
      const double sx = b1.x - b0.x, sy = b1.y - b0.y;
      const double den = rx * sy - ry * sx;
      if (std::fabs(den) < 1e-12) continue;
      const double t = ((b0.x - a0.x) * sy - (b0.y - a0.y) * sx) / den;
      const double u = ((b0.x - a0.x) * ry - (b0.y - a0.y) * rx) / den;
      if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) continue;
      cx = a0.x + t * rx;
      cy = a0.y + t * ry;
      vseg = int(a);
      pseg = int(b);
      break;
    }
  }
  if (vseg < 0) {
    throw DataError("crossing_interaction: routes never cross");
  }

  const RouteNode& va = wc.nodes[size_t(vroute.node_seq[size_t(vseg) - 1])];
  const RouteNode& vb = wc.nodes[size_t(vroute.node_seq[size_t(vseg)])];
  const double vlen = std::hypot(vb.x - va.x, vb.y - va.y);
  const double ux = (vb.x - va.x) / vlen, uy = (vb.y - va.y) / vlen;
  const RouteNode& pa = wc.nodes[size_t(proute.node_seq[size_t(pseg) - 1])];
  const RouteNode& pb = wc.nodes[size_t(proute.node_seq[size_t(pseg)])];
  const double plen = std::hypot(pb.x - pa.x, pb.y - pa.y);
  const double px = (pb.x - pa.x) / plen, py = (pb.y - pa.y) / plen;

  // Vehicle three cells short of the crossing at t0, window backed off along
  // its segment; pedestrian painted stepping toward the crossing, reaching
  // 1.7 cells short of it at t0.
  const double vspeed = mid_speed(vsp);
  const double approach = 3.0;
  const double back = approach + vspeed * (gc.n_in - 1) * dt;
  const double cross_at = (cx - va.x) * ux + (cy - va.y) * uy;
  if (back > cross_at - 0.5) {
    throw DataError("crossing_interaction: vehicle segment too short before "
                    "the crossing");
  }
  WorldState st = make_world(wc);
  const int id =
      add_actor(st, vsp, cx - ux * back, cy - uy * back, ux, uy, vspeed,
                vroute.node_seq[size_t(vseg)]);
  const int t0 = gc.n_in - 1;
  const Trace tr = roll_trace(std::move(st), gc.n_in, dt);

  const double pspeed = mid_speed(psp);
  const double ped_gap = 1.7;
  const double ped_x0 = cx - px * ped_gap, ped_y0 = cy - py * ped_gap;
  const double ped_back = (ped_x0 - pa.x) * px + (ped_y0 - pa.y) * py -
                          pspeed * (gc.n_in - 1) * dt;
  if (ped_back < 0.0) {
    throw DataError("crossing_interaction: pedestrian segment too short "
                    "before the crossing");
  }
  std::vector<DogmaFrame> manipulated = tr.dogma;
  for (int k = 0; k <= t0; ++k) {
    const double lag = (t0 - k) * dt * pspeed;
    inject_disk(manipulated[size_t(k)], ped_x0 - px * lag, ped_y0 - py * lag,
                psp.half_w, px * pspeed, py * pspeed, wc.m_hit, wc.v_max);
  }

  const PredictionBundle clean = forward_at(ck, tr.dogma, t0);
  const PredictionBundle manip = forward_at(ck, manipulated, t0);

  // Forward advance: occupancy-weighted centroid along the heading over the
  // vehicle's corridor, measured from its position at t0.
  const int vidx = object_index(tr.states[size_t(t0)], id);
  if (vidx < 0) {
    throw DataError("crossing_interaction: vehicle left the world before t0");
  }
  const SceneObject veh = tr.states[size_t(t0)].objects[size_t(vidx)];
  const double corridor = veh.half_w + 1.0;
  const auto advance = [&](const std::vector<float>& dyn) {
    double mass = 0.0, moment = 0.0;
    for (int i = 0; i < wc.height; ++i) {
      for (int j = 0; j < wc.width; ++j) {
        const double rx = (j + 0.5) - veh.x, ry = (i + 0.5) - veh.y;
        const double ahead = rx * ux + ry * uy;
        const double side = -rx * uy + ry * ux;
        if (std::fabs(side) > corridor) continue;
        if (ahead < -(veh.half_l + 1.0)) continue;
        const double w = dyn[size_t(i) * wc.width + j];
        mass += w;
        moment += w * ahead;
      }
    }
    return mass < 1e-6 ? 0.0 : moment / mass;
  };

  ScenarioResult r;
  r.name = "crossing_interaction";
  push(r, "t0_frame", t0);
  const int h = pick_horizon(clean.horizons_s);
  push(r, "horizon_s", clean.horizons_s[size_t(h)]);
  for (int i = 0; i < gc.n_pred; ++i) {
    push(r, horizon_key("advance_clean", i),
         advance(clean.y_dyn[size_t(i)].data()));
    push(r, horizon_key("advance_injected", i),
         advance(manip.y_dyn[size_t(i)].data()));
  }
  push(r, "advance_reduction",
       r.metric(horizon_key("advance_clean", h)) -
           r.metric(horizon_key("advance_injected", h)));

  if (!out_dir.empty()) {
    // Truth continuations: clean world, and the same state with the painted
    // pedestrian made real so the yield rule engages.
    const std::vector<int> offsets = model_offsets(gc, wc.frame_rate);
    const std::vector<LabelFrame> gt_clean =
        continue_labels(tr.states[size_t(t0)], offsets, dt);
    WorldState with_ped = tr.states[size_t(t0)];
    add_actor(with_ped, psp, ped_x0, ped_y0, px, py, pspeed,
              proute.node_seq[size_t(pseg)]);
    const std::vector<LabelFrame> gt_ped =
        continue_labels(std::move(with_ped), offsets, dt);
    emit_pixmap(r, out_dir, horizon_key("interaction_clean", h),
                clean.y_dyn[size_t(h)].data(), dynamic_truth(gt_clean[size_t(h)]),
                wc.height, wc.width);
    emit_pixmap(r, out_dir, horizon_key("interaction_injected", h),
                manip.y_dyn[size_t(h)].data(), dynamic_truth(gt_ped[size_t(h)]),
                wc.height, wc.width);
  }
  return r;
}

ScenarioReport scenario_suite(const ScenarioSuiteConfig& cfg) {
  for (const std::string* path :
       {&cfg.interaction_world, &cfg.occlusion_world}) {
    if (!fs::exists(*path)) {
      throw DataError("missing world config: " + *path);
    }
  }
  const WorldConfig interaction =
      world_config_from(KeyValueConfig::from_file(cfg.interaction_world));
  const WorldConfig occlusion =
      world_config_from(KeyValueConfig::from_file(cfg.occlusion_world));
  const Checkpoint ck_inter = load_checkpoint(cfg.interaction_checkpoint);
  const Checkpoint ck_ff = load_checkpoint(cfg.feedforward_checkpoint);
  const Checkpoint ck_rec = load_checkpoint(cfg.recurrent_checkpoint);

  ScenarioReport report;
  report.results.push_back(
      run_occluded_vehicle(ck_ff, ck_rec, occlusion, cfg.out_dir));
  report.results.push_back(
      run_occluded_pedestrian(ck_ff, ck_rec, occlusion, cfg.out_dir));
  report.results.push_back(
      run_occluded_static(ck_ff, ck_rec, occlusion, cfg.out_dir));
  report.results.push_back(
      run_multimodal_turn(ck_inter, interaction, cfg.out_dir));
  report.results.push_back(
      run_crossing_interaction(ck_inter, interaction, cfg.out_dir));

  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    report.report_path = cfg.out_dir + "/scenario_report.txt";
    std::ofstream out(report.report_path);
    if (!out) throw DataError("cannot write " + report.report_path);
    for (const ScenarioResult& r : report.results) {
      for (const ScenarioMetric& m : r.metrics) {
        char line[192];
        std::snprintf(line, sizeof(line), "scenario=%s metric=%s value=%.6f\n",
                      r.name.c_str(), m.name.c_str(), m.value);
        out << line;
      }
    }
  }
  return report;
}

}  // namespace gpm
