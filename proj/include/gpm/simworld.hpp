#ifndef GPM_SIMWORLD_HPP_
#define GPM_SIMWORLD_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gpm/config.hpp"
#include "gpm/domain.hpp"

namespace gpm {

// Geometry lives in cell units: cell (row i, col j) spans x in [j, j+1),
// y in [i, i+1); x grows east (columns), y grows north (rows). Positions and
// kinematics are double precision so long straight runs stay exact.

struct RectArea {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // axis-aligned, x0<x1, y0<y1
};

enum class ObjectClass { kVehicle, kCyclist, kPedestrian };
ObjectClass object_class_from(const std::string& name);  // throws ConfigError
std::string object_class_name(ObjectClass cls);

struct RouteNode {
  double x = 0, y = 0;
};

// Directed route segment; `weight` sets the branch probability when several
// edges leave one node (turn multimodality).
struct RouteEdge {
  int from = 0, to = 0;
  double weight = 1.0;
};

struct SpawnerSpec {
  ObjectClass cls = ObjectClass::kVehicle;
  double rate_hz = 0.1;  // Bernoulli spawn chance rate*dt per step
  double speed_min = 1.0, speed_max = 2.0;  // cells/s
  int entry_node = 0;
  double half_w = 1.0;  // lateral half extent; disk radius for pedestrians
  double half_l = 1.0;  // half extent along the heading
};

struct WorldConfig {
  int width = 64, height = 64;
  double cell_size = 0.15;   // meters per cell
  double frame_rate = 10.0;  // Hz
  double sensor_x = 32.0, sensor_y = 32.0;
  double ray_step_deg = 0.25;
  double m_hit = 0.95, m_free = 0.95;
  double sigma_v = 0.1;  // velocity noise, cells/s
  int n_warm = 3;        // frames before an object emits velocity
  double v_max = 10.0;   // cells/s; velocity channel normalization
  double accel = 2.0;          // cells/s^2 back toward cruise speed
  double brake_decel = 6.0;    // cells/s^2 while yielding
  double brake_lookahead = 12.0;  // corridor length scanned ahead, cells
  double brake_margin = 1.5;      // lateral corridor slack, cells
  int preroll = 0;  // steps simulated before the first recorded frame
  std::uint64_t seed = 1;
  std::vector<RectArea> walls;
  std::vector<RouteNode> nodes;
  std::vector<RouteEdge> edges;
  std::vector<SpawnerSpec> spawners;

  void validate() const;  // throws ConfigError
};

// Key=value form: scalar keys match the field names; indexed entries use
// wall.N = "x0 y0 x1 y1", node.N = "x y", edge.N = "from to weight",
// spawner.N = "class rate speed_min speed_max entry_node half_w half_l"
// (N ordered numerically). `world_config_to` writes the same shape back.
WorldConfig world_config_from(const KeyValueConfig& kv);
void world_config_to(const WorldConfig& cfg, KeyValueConfig& kv);

struct SceneObject {
  int id = 0;
  ObjectClass cls = ObjectClass::kVehicle;
  double half_w = 1.0, half_l = 1.0;
  double x = 0, y = 0;          // footprint center
  double dir_x = 1, dir_y = 0;  // unit heading
  double speed = 0;             // cells/s along heading
  double cruise_speed = 0;
  int edge_to = 0;  // route node currently steered for
  bool braking = false;
  int seen_frames = 0;  // consecutive frames with at least one observed cell
};

struct WorldState {
  WorldConfig cfg;
  std::vector<SceneObject> objects;
  std::mt19937_64 rng;
  std::int64_t frame = 0;
  int next_id = 1;
  std::int64_t spawn_rejections = 0;  // saturation bookkeeping
};

WorldState make_world(const WorldConfig& cfg);

// Advances dt seconds: spawns, yields vehicles to pedestrians in their
// corridor, moves objects along routes (sampling a branch at each node),
// despawns at route ends. Static collisions are impossible by construction:
// routes are laid outside walls and objects never leave their route.
void world_step(WorldState& state, double dt);

// True if the footprint of `o` covers the point (px, py).
bool footprint_covers(const SceneObject& o, double px, double py);

// [H*W] rasters. `static_blocked` marks cells any wall overlaps;
// `object_owner` maps each cell to the covering object's index in
// state.objects (-1 if none; later objects win overlaps).
std::vector<std::uint8_t> static_blocked(const WorldConfig& cfg);
std::vector<int> object_owner(const WorldState& state);

struct ViewMasks {
  int height = 0, width = 0;
  std::vector<std::uint8_t> occupied, free;  // mutually exclusive
};

// Casts one ray per ray_step_deg over the full circle from the sensor using
// exact grid traversal: cells crossed before the first blocked cell are
// free, the blocked cell is occupied, everything beyond stays unobserved.
ViewMasks raycast_observe(const WorldState& state);

// Builds the sensor frame from the masks: occupancy masses m_hit/m_free,
// true object velocity (plus Gaussian noise sigma_v, normalized by v_max,
// clamped to [-1,1]) on observed dynamic cells. Updates each object's
// consecutive-observation counter; objects seen fewer than n_warm frames
// emit zero velocity, mimicking a real filter's convergence delay.
DogmaFrame render_dogma(WorldState& state, const ViewMasks& masks);

// Ground-truth labels from unoccluded geometry. Static coverage is exact
// (axis-aligned walls); dynamic coverage is supersampled per cell.
LabelFrame render_labels(const WorldState& state);

struct DatasetManifest {
  int frame_count = 0;
  int split_index = 0;  // first test-set frame (80/20 split)
  std::uint64_t seed = 0;
  std::string config_hash;
  double frame_rate = 0, v_max = 0, cell_size = 0;
  int width = 0, height = 0;
};

std::string dataset_frame_path(const std::string& dir, int index,
                               const char* kind);  // kind: dogma|slabel|dlabel

// Steps the world n_frames times past the preroll, writing per frame
// frame_%06d.dogma.ogt (rank-3 [H,W,4]) plus .slabel/.dlabel (rank-2), and a
// manifest.txt. Same config + seed reproduces bit-identical files.
DatasetManifest generate_dataset(const WorldConfig& cfg, int n_frames,
                                 const std::string& out_dir);

DatasetManifest read_manifest(const std::string& dir);

}  // namespace gpm

#endif  // GPM_SIMWORLD_HPP_
