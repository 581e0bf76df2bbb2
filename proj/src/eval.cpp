#include "gpm/eval.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gpm/errors.hpp"

namespace gpm {

namespace {

constexpr float kOccupiedBand = 0.55f;
constexpr float kFreeBand = 0.45f;
constexpr float kStaticSweepThreshold = 0.5f;

CellClass classify_probability(float p) {
  if (p > kOccupiedBand) return CellClass::kOccupied;
  if (p < kFreeBand) return CellClass::kFree;
  return CellClass::kIgnored;
}

double safe_ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : double(num) / double(den);
}

}  // namespace

std::int64_t GroundTruthMask::count(CellClass c) const {
  return std::count(cells.begin(), cells.end(), c);
}

GroundTruthMask classify_ground_truth(const DogmaFrame& frame) {
  GroundTruthMask m;
  m.height = frame.height;
  m.width = frame.width;
  m.cells.reserve(frame.m_occ.size());
  for (size_t i = 0; i < frame.m_occ.size(); ++i) {
    m.cells.push_back(
        classify_probability(occupancy_probability(frame.m_occ[i],
                                                   frame.m_free[i])));
  }
  return m;
}

GroundTruthMask ground_truth_from_labels(const LabelFrame& labels) {
  GroundTruthMask m;
  m.height = labels.height;
  m.width = labels.width;
  m.cells.reserve(labels.y_static.size());
  for (size_t i = 0; i < labels.y_static.size(); ++i) {
    const float covered =
        std::min(1.0f, labels.y_static[i] + labels.y_dynamic[i]);
    m.cells.push_back(classify_probability(covered));
  }
  return m;
}

std::vector<std::uint8_t> compose_prediction(const PredictionBundle& bundle,
                                             int horizon, float gamma_dyn) {
  if (!(gamma_dyn > 0.0f && gamma_dyn < 1.0f)) {
    throw ConfigError("compose_prediction: gamma must lie inside (0,1)");
  }
  if (horizon < 0 || size_t(horizon) >= bundle.y_dyn.size()) {
    throw ConfigError("compose_prediction: horizon index " +
                      std::to_string(horizon) + " outside 0.." +
                      std::to_string(bundle.y_dyn.size()));
  }
  const std::vector<float>& stat = bundle.y_stat.data();
  const std::vector<float>& dyn = bundle.y_dyn[size_t(horizon)].data();
  if (stat.size() != dyn.size()) {
    throw DataError("compose_prediction: static and dynamic rasters disagree");
  }
  std::vector<std::uint8_t> out(stat.size());
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = stat[i] > kStaticSweepThreshold || dyn[i] > gamma_dyn;
  }
  return out;
}

double ConfusionCounts::tpr() const { return safe_ratio(tp, tp + fn); }
double ConfusionCounts::fpr() const { return safe_ratio(fp, fp + tn); }
double ConfusionCounts::f1() const {
  return tp == 0 ? 0.0 : safe_ratio(2 * tp, 2 * tp + fp + fn);
}

ConfusionCounts count_confusion(const std::vector<std::uint8_t>& predicted,
                                const GroundTruthMask& truth) {
  if (predicted.size() != truth.cells.size()) {
    throw DataError("count_confusion: raster and mask sizes disagree");
  }
  ConfusionCounts c;
  for (size_t i = 0; i < predicted.size(); ++i) {
    switch (truth.cells[i]) {
      case CellClass::kOccupied:
        ++(predicted[i] ? c.tp : c.fn);
        break;
      case CellClass::kFree:
        ++(predicted[i] ? c.fp : c.tn);
        break;
      case CellClass::kIgnored:
        break;
    }
  }
  return c;
}

std::vector<float> gamma_grid() {
  std::vector<float> g;
  g.reserve(99);
  for (int k = 99; k >= 1; --k) g.push_back(float(k) / 100.0f);
  return g;
}

ConfusionAccumulator::ConfusionAccumulator(int n_horizons,
                                           std::vector<float> gammas,
                                           float f1_threshold)
    : n_horizons_(n_horizons),
      gammas_(std::move(gammas)),
      f1_threshold_(f1_threshold) {
  if (n_horizons_ <= 0) {
    throw ConfigError("confusion accumulator needs at least one horizon");
  }
  if (gammas_.empty()) {
    throw ConfigError("confusion accumulator needs a non-empty gamma grid");
  }
  for (size_t k = 0; k < gammas_.size(); ++k) {
    if (!(gammas_[k] > 0.0f && gammas_[k] < 1.0f)) {
      throw ConfigError("gamma grid leaves (0,1)");
    }
    if (k > 0 && !(gammas_[k] < gammas_[k - 1])) {
      throw ConfigError("gamma grid must be strictly decreasing");
    }
  }
  if (!(f1_threshold_ > 0.0f && f1_threshold_ < 1.0f)) {
    throw ConfigError("f1 threshold must lie inside (0,1)");
  }
  hist_pos_.assign(size_t(n_horizons_),
                   std::vector<std::int64_t>(gammas_.size() + 1, 0));
  hist_neg_ = hist_pos_;
  fixed_.assign(size_t(n_horizons_), ConfusionCounts{});
}

void ConfusionAccumulator::add(const PredictionBundle& bundle,
                               const std::vector<GroundTruthMask>& truth) {
  if (bundle.y_dyn.size() != size_t(n_horizons_) ||
      truth.size() != size_t(n_horizons_)) {
    throw DataError("confusion accumulator: horizon count mismatch");
  }
  const std::vector<float>& stat = bundle.y_stat.data();
  for (int h = 0; h < n_horizons_; ++h) {
    const std::vector<float>& dyn = bundle.y_dyn[size_t(h)].data();
    const GroundTruthMask& mask = truth[size_t(h)];
    if (dyn.size() != stat.size() || mask.cells.size() != stat.size()) {
      throw DataError("confusion accumulator: raster shapes disagree");
    }
    std::int64_t counted = 0;
    for (size_t i = 0; i < stat.size(); ++i) {
      if (mask.cells[i] == CellClass::kIgnored) continue;
      ++counted;
      const bool occ = mask.cells[i] == CellClass::kOccupied;
      // gamma bucket: first index of the descending grid that predicts this
      // cell; the static output above 0.5 predicts it everywhere.
      size_t k0 = gammas_.size();
      if (stat[i] > kStaticSweepThreshold) {
        k0 = 0;
      } else {
        const float v = dyn[i];
        const auto it =
            std::partition_point(gammas_.begin(), gammas_.end(),
                                 [v](float g) { return !(v > g); });
        k0 = size_t(it - gammas_.begin());
      }
      (occ ? hist_pos_ : hist_neg_)[size_t(h)][k0] += 1;

      const bool fixed_pred =
          stat[i] > f1_threshold_ || dyn[i] > f1_threshold_;
      ConfusionCounts& fc = fixed_[size_t(h)];
      if (occ) {
        ++(fixed_pred ? fc.tp : fc.fn);
      } else {
        ++(fixed_pred ? fc.fp : fc.tn);
      }
    }
    // ignored cells reach no bucket; every other cell lands in exactly one
    // histogram bucket and one fixed-threshold bin, so the two tallies count
    // the same population.
    assert(std::accumulate(hist_pos_[size_t(h)].begin(),
                           hist_pos_[size_t(h)].end(), std::int64_t(0)) +
               std::accumulate(hist_neg_[size_t(h)].begin(),
                               hist_neg_[size_t(h)].end(), std::int64_t(0)) ==
           fixed_[size_t(h)].total());
    (void)counted;
  }
  ++windows_;
}

ConfusionCounts ConfusionAccumulator::counts_at(int horizon,
                                                int gamma_index) const {
  if (horizon < 0 || horizon >= n_horizons_ || gamma_index < 0 ||
      size_t(gamma_index) >= gammas_.size()) {
    throw ConfigError("counts_at: index out of range");
  }
  const std::vector<std::int64_t>& pos = hist_pos_[size_t(horizon)];
  const std::vector<std::int64_t>& neg = hist_neg_[size_t(horizon)];
  ConfusionCounts c;
  for (size_t k = 0; k < pos.size(); ++k) {
    const bool predicted = k <= size_t(gamma_index);
    c.tp += predicted ? pos[k] : 0;
    c.fn += predicted ? 0 : pos[k];
    c.fp += predicted ? neg[k] : 0;
    c.tn += predicted ? 0 : neg[k];
  }
  return c;
}

std::vector<RocCurve> ConfusionAccumulator::roc() const {
  std::vector<RocCurve> curves;
  curves.resize(size_t(n_horizons_));
  for (int h = 0; h < n_horizons_; ++h) {
    const std::vector<std::int64_t>& pos = hist_pos_[size_t(h)];
    const std::vector<std::int64_t>& neg = hist_neg_[size_t(h)];
    const std::int64_t total_pos =
        std::accumulate(pos.begin(), pos.end(), std::int64_t(0));
    const std::int64_t total_neg =
        std::accumulate(neg.begin(), neg.end(), std::int64_t(0));
    if (total_pos == 0) {
      throw DataError("roc: no ground-truth occupied cells at horizon " +
                      std::to_string(h + 1));
    }
    if (total_neg == 0) {
      throw DataError("roc: no ground-truth free cells at horizon " +
                      std::to_string(h + 1));
    }
    std::int64_t tp = 0, fp = 0;
    RocCurve& curve = curves[size_t(h)];
    curve.points.reserve(gammas_.size());
    for (size_t k = 0; k < gammas_.size(); ++k) {
      tp += pos[k];
      fp += neg[k];
      curve.points.push_back(RocPoint{gammas_[k], double(tp) / total_pos,
                                      double(fp) / total_neg});
    }
  }
  return curves;
}

F1Report ConfusionAccumulator::f1(const std::vector<float>& horizons_s) const {
  if (horizons_s.size() != size_t(n_horizons_)) {
    throw DataError("f1: horizon label count mismatch");
  }
  F1Report rep;
  rep.threshold = f1_threshold_;
  for (int h = 0; h < n_horizons_; ++h) {
    F1Entry e;
    e.horizon_s = horizons_s[size_t(h)];
    e.counts = fixed_[size_t(h)];
    e.f1 = e.counts.f1();
    rep.per_horizon.push_back(e);
  }
  return rep;
}

std::vector<std::uint8_t> baseline_constant_velocity(const DogmaFrame& frame,
                                                     float horizon_s,
                                                     double v_max,
                                                     double speed_threshold) {
  if (!(v_max > 0.0)) {
    throw ConfigError("baseline: v_max must be positive");
  }
  if (!(horizon_s >= 0.0f)) {
    throw ConfigError("baseline: horizon must be non-negative");
  }
  const int h = frame.height, w = frame.width;
  std::vector<std::uint8_t> out(size_t(h) * w, 0);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const size_t c = size_t(i) * w + j;
      if (occupancy_probability(frame.m_occ[c], frame.m_free[c]) <=
          kOccupiedBand) {
        continue;
      }
      const double vx = double(frame.v_e[c]) * v_max;  // cells/s
      const double vy = double(frame.v_n[c]) * v_max;
      int ti = i, tj = j;
      if (std::hypot(vx, vy) > speed_threshold) {
        ti = int(std::lround(i + vy * horizon_s));
        tj = int(std::lround(j + vx * horizon_s));
      }
      if (ti >= 0 && ti < h && tj >= 0 && tj < w) {
        out[size_t(ti) * w + tj] = 1;
      }
    }
  }
  return out;
}

double mean_squared_error(const std::vector<float>& prediction,
                          const std::vector<float>& truth) {
  if (prediction.size() != truth.size() || prediction.empty()) {
    throw DataError("mean_squared_error: length mismatch");
  }
  double sum = 0.0;
  for (size_t i = 0; i < prediction.size(); ++i) {
    const double d = double(prediction[i]) - double(truth[i]);
    sum += d * d;
  }
  return sum / double(prediction.size());
}

std::vector<float> raster_to_float(const std::vector<std::uint8_t>& raster) {
  std::vector<float> out(raster.size());
  for (size_t i = 0; i < raster.size(); ++i) out[i] = raster[i] ? 1.0f : 0.0f;
  return out;
}

std::vector<std::uint8_t> threshold_raster(const std::vector<float>& values,
                                           float gamma) {
  std::vector<std::uint8_t> out(values.size());
  for (size_t i = 0; i < values.size(); ++i) out[i] = values[i] > gamma;
  return out;
}

int connected_components(const std::vector<std::uint8_t>& raster, int height,
                         int width) {
  if (raster.size() != size_t(height) * size_t(width)) {
    throw DataError("connected_components: raster size disagrees with dims");
  }
  std::vector<std::uint8_t> seen(raster.size(), 0);
  std::vector<int> stack;
  int components = 0;
  for (int start = 0; start < int(raster.size()); ++start) {
    if (!raster[size_t(start)] || seen[size_t(start)]) continue;
    ++components;
    stack.push_back(start);
    seen[size_t(start)] = 1;
    while (!stack.empty()) {
      const int c = stack.back();
      stack.pop_back();
      const int i = c / width, j = c % width;
      for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          const int ni = i + di, nj = j + dj;
          if (ni < 0 || ni >= height || nj < 0 || nj >= width) continue;
          const int n = ni * width + nj;
          if (raster[size_t(n)] && !seen[size_t(n)]) {
            seen[size_t(n)] = 1;
            stack.push_back(n);
          }
        }
      }
    }
  }
  return components;
}

namespace {

std::uint8_t channel_byte(float v) {
  const float clamped = std::min(1.0f, std::max(0.0f, v));
  return std::uint8_t(std::lround(255.0f * clamped));
}

}  // namespace

Pixmap render_comparison(const std::vector<float>& prediction,
                         const std::vector<float>& truth, int height,
                         int width) {
  if (height <= 0 || width <= 0 ||
      prediction.size() != size_t(height) * size_t(width) ||
      truth.size() != prediction.size()) {
    throw DataError("render_comparison: raster sizes disagree with dims");
  }
  Pixmap img;
  img.width = width;
  img.height = height;
  img.rgb.assign(size_t(height) * width * 3, 0);
  for (int i = 0; i < height; ++i) {
    const int pixel_row = height - 1 - i;  // grid row 0 is south
    for (int j = 0; j < width; ++j) {
      const size_t c = size_t(i) * width + j;
      const size_t o = (size_t(pixel_row) * width + j) * 3;
      img.rgb[o] = channel_byte(truth[c]);
      img.rgb[o + 1] = channel_byte(prediction[c]);
    }
  }
  return img;
}

void write_pixmap(const Pixmap& img, const std::string& path) {
  if (img.width <= 0 || img.height <= 0 ||
      img.rgb.size() != size_t(img.width) * size_t(img.height) * 3) {
    throw DataError("write_pixmap: inconsistent image dimensions");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write pixmap: " + path);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()),
            std::streamsize(img.rgb.size()));
  out.flush();
  if (!out) throw DataError("short write on pixmap: " + path);
}

Pixmap read_pixmap(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open pixmap: " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  if (!(in >> magic >> w >> h >> maxval) || magic != "P6" || w <= 0 ||
      h <= 0 || maxval != 255) {
    throw DataError("malformed pixmap header: " + path);
  }
  in.get();  // single whitespace byte separates header and pixels
  Pixmap img;
  img.width = w;
  img.height = h;
  img.rgb.resize(size_t(w) * size_t(h) * 3);
  in.read(reinterpret_cast<char*>(img.rgb.data()),
          std::streamsize(img.rgb.size()));
  if (size_t(in.gcount()) != img.rgb.size()) {
    throw DataError("truncated pixmap pixels: " + path);
  }
  return img;
}

std::vector<GroundTruthMask> window_truth(const Dataset& data,
                                          const GpmConfig& cfg, int t0) {
  std::vector<GroundTruthMask> out;
  out.reserve(size_t(cfg.n_pred));
  for (int i = 1; i <= cfg.n_pred; ++i) {
    const int t = t0 + label_offset(i, cfg.dt_pred, data.manifest.frame_rate);
    if (t0 < 0 || t < 0 || size_t(t) >= data.labels.size()) {
      throw DataError("window truth at t0=" + std::to_string(t0) +
                      " needs label " + std::to_string(t) +
                      " outside the dataset");
    }
    out.push_back(ground_truth_from_labels(data.labels[size_t(t)]));
  }
  return out;
}

EvalResult evaluate_dataset(const EvalConfig& cfg) {
  if (cfg.stride < 1) {
    throw ConfigError("evaluation stride must be at least 1");
  }
  const Checkpoint ck = load_checkpoint(cfg.checkpoint_dir);
  const Dataset data = load_dataset(cfg.dataset_dir);
  if (ck.config.width != data.manifest.width ||
      ck.config.height != data.manifest.height) {
    throw ConfigError("checkpoint grid " + std::to_string(ck.config.width) +
                      "x" + std::to_string(ck.config.height) +
                      " does not match dataset grid " +
                      std::to_string(data.manifest.width) + "x" +
                      std::to_string(data.manifest.height));
  }

  const auto [lo, hi] =
      admissible_t0(ck.config, data.manifest.frame_rate,
                    data.manifest.split_index, data.manifest.frame_count);
  ConfusionAccumulator acc(ck.config.n_pred, gamma_grid(), cfg.f1_threshold);
  std::mt19937_64 rng(0);  // inference mode draws nothing
  EvalResult res;
  for (int t0 = lo; t0 <= hi; t0 += cfg.stride) {
    const TrainWindow w = window_at(data, ck.config, t0);
    const PredictionBundle bundle =
        gpm_forward(w.inputs, ck.params, ck.config, /*training=*/false, rng);
    if (res.horizons_s.empty()) res.horizons_s = bundle.horizons_s;
    acc.add(bundle, window_truth(data, ck.config, t0));
  }
  res.roc = acc.roc();
  res.f1 = acc.f1(res.horizons_s);
  res.windows = acc.windows();

  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    char row[160];
    for (size_t h = 0; h < res.roc.size(); ++h) {
      const std::string path =
          cfg.out_dir + "/roc_h" + std::to_string(h + 1) + ".csv";
      std::ofstream out(path, std::ios::trunc);
      if (!out) throw DataError("cannot write roc curve: " + path);
      out << "gamma,tpr,fpr\n";
      for (const RocPoint& pt : res.roc[h].points) {
        std::snprintf(row, sizeof row, "%.2f,%.6f,%.6f", double(pt.gamma),
                      pt.tpr, pt.fpr);
        out << row << '\n';
      }
      out.flush();
      if (!out) throw DataError("short write on roc curve: " + path);
    }
    const std::string path = cfg.out_dir + "/f1.csv";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write f1 table: " + path);
    out << "horizon,f1,tp,fp,fn\n";
    for (const F1Entry& e : res.f1.per_horizon) {
      std::snprintf(row, sizeof row, "%.6g,%.6f,%lld,%lld,%lld",
                    double(e.horizon_s), e.f1, (long long)e.counts.tp,
                    (long long)e.counts.fp, (long long)e.counts.fn);
      out << row << '\n';
    }
    out.flush();
    if (!out) throw DataError("short write on f1 table: " + path);
  }
  return res;
}

}  // namespace gpm
