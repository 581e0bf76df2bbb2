#ifndef GPM_EVAL_HPP_
#define GPM_EVAL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "gpm/domain.hpp"
#include "gpm/model.hpp"
#include "gpm/trainer.hpp"

namespace gpm {

enum class CellClass : std::uint8_t { kFree = 0, kOccupied = 1, kIgnored = 2 };

// Ternary per-cell ground truth: occupied above probability 0.55, free below
// 0.45, ignored inside the ambiguous band around the unobserved value 0.5.
struct GroundTruthMask {
  int height = 0, width = 0;
  std::vector<CellClass> cells;  // row-major

  std::int64_t count(CellClass c) const;
};

// Classifies a future sensor frame by its per-cell occupancy probability.
GroundTruthMask classify_ground_truth(const DogmaFrame& frame);

// Same rule on exact coverage labels. Total coverage (static + dynamic,
// clamped to 1) equals the occupancy probability of a perfectly observed
// cell, so the 0.55/0.45 band applies unchanged; only partially covered
// boundary cells land in it.
GroundTruthMask ground_truth_from_labels(const LabelFrame& labels);

// Binary predicted-occupied raster for one horizon: static output above the
// fixed 0.5 threshold, or dynamic output above the variable gamma. Lowering
// gamma can only add cells. [ConfigError on gamma outside (0,1) or a bad
// horizon index]
std::vector<std::uint8_t> compose_prediction(const PredictionBundle& bundle,
                                             int horizon, float gamma_dyn);

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
  double tpr() const;  // tp / (tp + fn); 0 when the class is empty
  double fpr() const;  // fp / (fp + tn); 0 when the class is empty
  double f1() const;   // 2tp / (2tp + fp + fn); 0 when tp == 0
};

// Tallies one prediction raster against a mask; ignored cells contribute to
// no count, so total() equals the number of non-ignored cells. [DataError on
// shape mismatch]
ConfusionCounts count_confusion(const std::vector<std::uint8_t>& predicted,
                                const GroundTruthMask& truth);

struct RocPoint {
  float gamma = 0;
  double tpr = 0, fpr = 0;
};

// Points ordered by gamma descending; both rates are non-decreasing along
// the curve because lowering gamma only adds predicted-occupied cells.
struct RocCurve {
  std::vector<RocPoint> points;
};

// 99 thresholds 0.99 down to 0.01.
std::vector<float> gamma_grid();

struct F1Entry {
  float horizon_s = 0;
  double f1 = 0;
  ConfusionCounts counts;
};

struct F1Report {
  float threshold = 0.55f;
  std::vector<F1Entry> per_horizon;
};

// Accumulates per-horizon confusion counts over evaluation windows: the full
// gamma sweep for ROC curves plus one fixed-threshold tally for F1 (the
// fixed threshold applies to the static and the dynamic output alike, while
// the sweep holds the static side at 0.5). Cells are bucketed by the first
// gamma index that would predict them, so one pass serves every threshold.
class ConfusionAccumulator {
 public:
  // gammas must be strictly decreasing inside (0,1). [ConfigError]
  ConfusionAccumulator(int n_horizons, std::vector<float> gammas,
                       float f1_threshold = 0.55f);

  // One window's predictions against its per-horizon masks. [DataError on
  // shape or horizon-count mismatch]
  void add(const PredictionBundle& bundle,
           const std::vector<GroundTruthMask>& truth);

  // [DataError when a horizon saw no positive or no negative cells]
  std::vector<RocCurve> roc() const;
  F1Report f1(const std::vector<float>& horizons_s) const;

  ConfusionCounts counts_at(int horizon, int gamma_index) const;
  std::int64_t windows() const { return windows_; }

 private:
  int n_horizons_;
  std::vector<float> gammas_;
  float f1_threshold_;
  // hist_*[h][k]: ground-truth positive/negative cells first predicted at
  // gamma index k; k == gammas_.size() means predicted at no gamma.
  std::vector<std::vector<std::int64_t>> hist_pos_, hist_neg_;
  std::vector<ConfusionCounts> fixed_;
  std::int64_t windows_ = 0;
};

// Constant-velocity propagation: an occupied cell moving faster than
// speed_threshold (cells/s) is stamped at its position translated by
// velocity * horizon (rounded to the nearest cell, dropped when it leaves
// the grid); slower occupied cells are stamped in place. Velocities are
// denormalized with v_max. [ConfigError]
std::vector<std::uint8_t> baseline_constant_velocity(
    const DogmaFrame& frame, float horizon_s, double v_max,
    double speed_threshold = 0.5);

// Mean of squared per-cell differences. [DataError on length mismatch]
double mean_squared_error(const std::vector<float>& prediction,
                          const std::vector<float>& truth);

std::vector<float> raster_to_float(const std::vector<std::uint8_t>& raster);

// Cells strictly above gamma.
std::vector<std::uint8_t> threshold_raster(const std::vector<float>& values,
                                           float gamma);

// Number of 8-connected components of nonzero cells. [DataError]
int connected_components(const std::vector<std::uint8_t>& raster, int height,
                         int width);

struct Pixmap {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // 3 bytes per pixel, top row first
};

// Ground truth fills the red channel, the prediction the green channel, so
// hits render yellow, false positives green, false negatives red. Grid row 0
// (south) lands on the bottom pixel row. Values clamp to [0,1]. [DataError]
Pixmap render_comparison(const std::vector<float>& prediction,
                         const std::vector<float>& truth, int height,
                         int width);

// Binary P6, maxval 255. [DataError on IO failure or malformed input]
void write_pixmap(const Pixmap& img, const std::string& path);
Pixmap read_pixmap(const std::string& path);

struct EvalConfig {
  std::string checkpoint_dir;
  std::string dataset_dir;
  std::string out_dir;  // empty: compute only, write nothing
  int stride = 5;       // entry-point stride across the test split
  float f1_threshold = 0.55f;
};

struct EvalResult {
  std::vector<RocCurve> roc;  // per horizon
  F1Report f1;
  std::vector<float> horizons_s;
  std::int64_t windows = 0;
};

// Ground truth masks for one entry point, one per horizon, from the coverage
// labels at the prediction instants. [DataError when a label index leaves
// the dataset]
std::vector<GroundTruthMask> window_truth(const Dataset& data,
                                          const GpmConfig& cfg, int t0);

// Slides entry points across the test split with the configured stride,
// forwards each window in inference mode and aggregates confusion counts.
// Writes roc_h{1..n}.csv (gamma,tpr,fpr) and f1.csv (horizon,f1,tp,fp,fn)
// under out_dir. [ConfigError, DataError]
EvalResult evaluate_dataset(const EvalConfig& cfg);

}  // namespace gpm

#endif  // GPM_EVAL_HPP_
