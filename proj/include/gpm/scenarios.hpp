#ifndef GPM_SCENARIOS_HPP_
#define GPM_SCENARIOS_HPP_

#include <string>
#include <vector>

#include "gpm/domain.hpp"
#include "gpm/simworld.hpp"
#include "gpm/trainer.hpp"

namespace gpm {

// Paints a disk-shaped object into a sensor frame: cells whose center lies
// within `radius` of (cx, cy) get occupied masses and the given velocity
// (cells/s, normalized by v_max and clamped like the renderer would).
// Counterfactual input manipulation; the underlying world never sees it.
void inject_disk(DogmaFrame& frame, double cx, double cy, double radius,
                 double vx, double vy, double m_hit, double v_max);

struct ScenarioMetric {
  std::string name;
  double value = 0.0;
};

struct ScenarioResult {
  std::string name;
  std::vector<ScenarioMetric> metrics;
  std::vector<std::string> artifacts;  // files written, if any

  double metric(const std::string& key) const;  // [DataError] unknown key
};

struct ScenarioReport {
  std::vector<ScenarioResult> results;
  std::string report_path;  // empty when out_dir was empty

  // Looks up scenario `name`, then metric `key`. [DataError]
  double metric(const std::string& name, const std::string& key) const;
};

// Scripted single-actor runs on a spawner-silenced copy of a world. Each
// returns per-scenario metrics and, when out_dir is nonempty, comparison
// pixmaps under it. All selection of the prediction instant is data driven
// (visibility masks, route geometry), never hard-coded frame numbers, so the
// scripts survive reasonable world-config edits. Hard errors: DataError when
// the world cannot stage the situation (no spawner of the needed class, no
// occlusion ever happens, routes never cross), ConfigError when a checkpoint
// grid does not match the world grid.

// A vehicle drives through a shadow narrower than its own length; the
// prediction instant is the first frame where most of it is hidden but a
// sparse silhouette remains. Reports mean predicted dynamic occupancy over
// the true footprint at the comparison horizon for both models.
ScenarioResult run_occluded_vehicle(const Checkpoint& feedforward,
                                    const Checkpoint& recurrent,
                                    const WorldConfig& world,
                                    const std::string& out_dir);

// A pedestrian walks into full occlusion; the prediction instant lies half a
// second after the last sighting. Same footprint-occupancy comparison.
ScenarioResult run_occluded_pedestrian(const Checkpoint& feedforward,
                                       const Checkpoint& recurrent,
                                       const WorldConfig& world,
                                       const std::string& out_dir);

// An oversized vehicle sweeps past structure, hiding previously observed
// wall cells. Reports mean predicted static occupancy over cells unobserved
// now but observed inside both models' input windows.
ScenarioResult run_occluded_static(const Checkpoint& feedforward,
                                   const Checkpoint& recurrent,
                                   const WorldConfig& world,
                                   const std::string& out_dir);

// A vehicle approaches a route branch; ground truth is forced down each arm
// in turn by pruning the other branch edges from a continuation state.
// Reports connected prediction modes per horizon (components above half the
// peak) and model-vs-extrapolation error against both continuations.
ScenarioResult run_multimodal_turn(const Checkpoint& ck,
                                   const WorldConfig& world,
                                   const std::string& out_dir);

// A vehicle approaches a pedestrian crossing; a second input copy gets a
// pedestrian painted in, stepping toward the crossing. Reports the predicted
// forward advance of the vehicle (occupancy-weighted centroid along its
// heading) for clean and manipulated inputs per horizon.
ScenarioResult run_crossing_interaction(const Checkpoint& ck,
                                        const WorldConfig& world,
                                        const std::string& out_dir);

struct ScenarioSuiteConfig {
  std::string interaction_checkpoint;  // branch + crossing scripts
  std::string feedforward_checkpoint;  // occlusion scripts, short memory
  std::string recurrent_checkpoint;    // occlusion scripts, long memory
  std::string interaction_world;       // world config paths
  std::string occlusion_world;
  std::string out_dir;  // empty: compute only, write nothing
};

// Loads the checkpoints and worlds, runs all five scripts and writes
// scenario_report.txt (one line per metric) plus the pixmaps under out_dir.
// [DataError, ConfigError]
ScenarioReport scenario_suite(const ScenarioSuiteConfig& cfg);

}  // namespace gpm

#endif  // GPM_SCENARIOS_HPP_
