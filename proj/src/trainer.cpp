#include "gpm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "gpm/adam.hpp"
#include "gpm/errors.hpp"
#include "gpm/loss.hpp"
#include "gpm/ogt.hpp"

namespace gpm {
namespace {

// Same portable uniform as the world generator: raw top-53 bits.
double uniform01(std::mt19937_64& rng) {
  return double(rng() >> 11) * (1.0 / 9007199254740992.0);
}

int uniform_index(std::mt19937_64& rng, int lo, int hi) {
  const int span = hi - lo + 1;
  return lo + std::min(span - 1, int(uniform01(rng) * span));
}

}  // namespace

void TrainConfig::validate() const {
  if (lr < 0) throw ConfigError("lr must be >= 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
    throw ConfigError("adam betas must lie in [0,1)");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (log_every < 1) throw ConfigError("log_every must be >= 1");
  if (dataset_dir.empty()) throw ConfigError("dataset_dir must be set");
  if (out_dir.empty()) throw ConfigError("out_dir must be set");
}

TrainConfig train_config_from(const KeyValueConfig& kv) {
  TrainConfig d;
  TrainConfig c;
  c.lr = kv.get_float_or("lr", d.lr);
  c.beta1 = kv.get_float_or("beta1", d.beta1);
  c.beta2 = kv.get_float_or("beta2", d.beta2);
  c.epochs = kv.get_int_or("epochs", d.epochs);
  c.max_iterations = kv.get_i64_or("max_iterations", d.max_iterations);
  c.checkpoint_every = kv.get_int_or("checkpoint_every", d.checkpoint_every);
  c.log_every = kv.get_int_or("log_every", d.log_every);
  c.seed = std::uint64_t(kv.get_i64_or("seed", std::int64_t(d.seed)));
  c.dataset_dir = kv.get_or("dataset_dir", d.dataset_dir);
  c.out_dir = kv.get_or("out_dir", d.out_dir);
  c.validate();
  return c;
}

void train_config_to(const TrainConfig& cfg, KeyValueConfig& kv) {
  kv.set_float("lr", cfg.lr);
  kv.set_float("beta1", cfg.beta1);
  kv.set_float("beta2", cfg.beta2);
  kv.set_int("epochs", cfg.epochs);
  kv.set_int("max_iterations", cfg.max_iterations);
  kv.set_int("checkpoint_every", cfg.checkpoint_every);
  kv.set_int("log_every", cfg.log_every);
  kv.set_int("seed", std::int64_t(cfg.seed));
  kv.set("dataset_dir", cfg.dataset_dir);
  kv.set("out_dir", cfg.out_dir);
}

Dataset load_dataset(const std::string& dir) {
  if (!std::filesystem::exists(dir + "/manifest.txt")) {
    throw DataError("not a dataset directory (no manifest.txt): " + dir);
  }
  Dataset d;
  d.dir = dir;
  d.manifest = read_manifest(dir);
  if (d.manifest.frame_count < 1 || d.manifest.width < 1 ||
      d.manifest.height < 1) {
    throw DataError("dataset manifest is empty or corrupt: " + dir);
  }
  d.frames.reserve(d.manifest.frame_count);
  d.labels.reserve(d.manifest.frame_count);
  const std::vector<int> label_dims = {d.manifest.height, d.manifest.width};
  for (int i = 0; i < d.manifest.frame_count; ++i) {
    const OgtTensor dogma = read_ogt(dataset_frame_path(dir, i, "dogma"));
    if (dogma.dims !=
        std::vector<int>{d.manifest.height, d.manifest.width, 4}) {
      throw DataError("dataset frame " + std::to_string(i) +
                      " does not match manifest dims");
    }
    d.frames.push_back(dogma_from_ogt(dogma));
    const OgtTensor ys = read_ogt(dataset_frame_path(dir, i, "slabel"));
    const OgtTensor yd = read_ogt(dataset_frame_path(dir, i, "dlabel"));
    if (ys.dims != label_dims || yd.dims != label_dims) {
      throw DataError("dataset labels " + std::to_string(i) +
                      " do not match manifest dims");
    }
    LabelFrame lf;
    lf.height = d.manifest.height;
    lf.width = d.manifest.width;
    lf.y_static = ys.data;
    lf.y_dynamic = yd.data;
    d.labels.push_back(std::move(lf));
  }
  return d;
}

int label_offset(int i, float dt_pred, double frame_rate) {
  return int(std::lround(double(i) * dt_pred * frame_rate));
}

std::pair<int, int> admissible_t0(const GpmConfig& cfg, double frame_rate,
                                  int begin, int end) {
  const int lo = begin + cfg.n_in - 1;
  const int hi = end - 1 - label_offset(cfg.n_pred, cfg.dt_pred, frame_rate);
  if (hi < lo) {
    throw DataError("no admissible window entry point in [" +
                    std::to_string(begin) + "," + std::to_string(end) +
                    "): need " + std::to_string(cfg.n_in) + " inputs and +" +
                    std::to_string(
                        label_offset(cfg.n_pred, cfg.dt_pred, frame_rate)) +
                    " label frames");
  }
  return {lo, hi};
}

TrainWindow window_at(const Dataset& data, const GpmConfig& cfg, int t0) {
  const int n = int(data.frames.size());
  const int max_off = label_offset(cfg.n_pred, cfg.dt_pred,
                                   data.manifest.frame_rate);
  if (t0 - (cfg.n_in - 1) < 0 || t0 + max_off >= n) {
    throw DataError("window at t0=" + std::to_string(t0) +
                    " leaves the dataset of " + std::to_string(n) + " frames");
  }
  TrainWindow w;
  w.t0 = t0;
  w.inputs.reserve(cfg.n_in);
  for (int k = cfg.n_in - 1; k >= 0; --k) {
    w.inputs.push_back(
        to_input_tensor(data.frames[t0 - k], cfg.input_channels));
  }
  const LabelFrame& at0 = data.labels[t0];
  w.static_label =
      Tensor::from_data({at0.height, at0.width}, at0.y_static);
  w.dynamic_labels.reserve(cfg.n_pred);
  for (int i = 1; i <= cfg.n_pred; ++i) {
    const LabelFrame& lf =
        data.labels[t0 + label_offset(i, cfg.dt_pred,
                                      data.manifest.frame_rate)];
    w.dynamic_labels.push_back(
        Tensor::from_data({lf.height, lf.width}, lf.y_dynamic));
  }
  return w;
}

TrainWindow sample_window(const Dataset& data, const GpmConfig& cfg,
                          std::mt19937_64& rng) {
  const auto [lo, hi] = admissible_t0(cfg, data.manifest.frame_rate, 0,
                                      data.manifest.split_index);
  return window_at(data, cfg, uniform_index(rng, lo, hi));
}

void save_checkpoint(const GpmParams& params, const GpmConfig& cfg,
                     std::int64_t iteration, const std::string& dir) {
  std::filesystem::create_directories(dir);
  KeyValueConfig ckv;
  gpm_config_to(cfg, ckv);
  ckv.write_file(dir + "/gpm.cfg");

  const auto named = params.named_tensors();
  for (const auto& [name, t] : named) {
    write_ogt(dir + "/" + name + ".ogt", t.dims(), t.data().data());
  }

  KeyValueConfig meta;
  meta.set("config_hash", fnv1a_hex(ckv.canonical()));
  meta.set_int("iteration", iteration);
  meta.set_int("tensor_count", std::int64_t(named.size()));
  meta.write_file(dir + "/checkpoint.txt");
}

Checkpoint load_checkpoint(const std::string& dir) {
  if (!std::filesystem::exists(dir + "/gpm.cfg")) {
    throw DataError("not a checkpoint directory (no gpm.cfg): " + dir);
  }
  const KeyValueConfig ckv = KeyValueConfig::from_file(dir + "/gpm.cfg");
  const KeyValueConfig meta =
      KeyValueConfig::from_file(dir + "/checkpoint.txt");
  if (meta.get("config_hash") != fnv1a_hex(ckv.canonical())) {
    throw DataError("checkpoint config was modified after saving: " + dir);
  }
  Checkpoint ck;
  ck.config = gpm_config_from(ckv);
  ck.iteration = meta.get_i64_or("iteration", 0);

  std::mt19937_64 rng(0);  // shapes only; every value is overwritten below
  ck.params = make_gpm_params(ck.config, rng, true);
  const auto named = ck.params.named_tensors();
  if (std::int64_t(named.size()) != meta.get_i64_or("tensor_count", -1)) {
    throw DataError("checkpoint tensor count does not match its config");
  }
  for (const auto& [name, t] : named) {
    const OgtTensor loaded = read_ogt(dir + "/" + name + ".ogt");
    if (loaded.dims != t.dims()) {
      throw DataError("checkpoint tensor " + name + " has drifted shape");
    }
    Tensor dst = t;
    dst.data() = loaded.data;
  }
  return ck;
}

TrainResult train(const TrainConfig& tc, const GpmConfig& gc) {
  tc.validate();
  gc.validate();
  const Dataset data = load_dataset(tc.dataset_dir);
  if (data.manifest.width != gc.width || data.manifest.height != gc.height) {
    throw ConfigError("dataset grid " + std::to_string(data.manifest.width) +
                      "x" + std::to_string(data.manifest.height) +
                      " does not match network input " +
                      std::to_string(gc.width) + "x" +
                      std::to_string(gc.height));
  }
  const auto [lo, hi] = admissible_t0(gc, data.manifest.frame_rate, 0,
                                      data.manifest.split_index);
  const std::int64_t per_epoch = hi - lo + 1;
  std::int64_t total = per_epoch * tc.epochs;
  if (tc.max_iterations > 0) total = std::min(total, tc.max_iterations);

  std::mt19937_64 rng(tc.seed);
  GpmParams params = make_gpm_params(gc, rng, true);
  AdamConfig ac;
  ac.lr = tc.lr;
  ac.beta1 = tc.beta1;
  ac.beta2 = tc.beta2;
  AdamOptimizer opt(ac);
  opt.register_params(params.tensors());

  std::filesystem::create_directories(tc.out_dir);
  TrainResult res;
  res.iterations = total;
  res.iterations_per_epoch = per_epoch;
  res.log_path = tc.out_dir + "/train_log.csv";
  res.checkpoint_dir = tc.out_dir + "/checkpoint";

  std::ofstream log(res.log_path, std::ios::trunc);
  if (!log) throw DataError("cannot write training log: " + res.log_path);
  log << loss_csv_header(gc.n_pred) << '\n';

  for (std::int64_t it = 0; it < total; ++it) {
    const TrainWindow w = sample_window(data, gc, rng);
    const PredictionBundle bundle =
        gpm_forward(w.inputs, params, gc, /*training=*/true, rng);
    const OverallLoss loss = overall_loss(bundle, w.static_label,
                                          w.dynamic_labels, gc.k_o, gc.k_i);
    if (!std::isfinite(loss.report.l_o)) {
      throw NumericError("non-finite loss at iteration " + std::to_string(it) +
                         " (window entry t0=" + std::to_string(w.t0) + ")");
    }
    backward(loss.total);
    opt.step();

    if (it % tc.log_every == 0 || it + 1 == total) {
      log << loss.report.csv_row(int(it)) << '\n';
    }
    if (it == 0) res.first_loss = loss.report.l_o;
    res.final_loss = loss.report.l_o;
    if (tc.checkpoint_every > 0 && (it + 1) % tc.checkpoint_every == 0 &&
        it + 1 < total) {
      save_checkpoint(params, gc, it + 1,
                      tc.out_dir + "/checkpoint_" + std::to_string(it + 1));
    }
  }
  log.flush();
  if (!log) throw DataError("short write on training log: " + res.log_path);
  save_checkpoint(params, gc, total, res.checkpoint_dir);
  return res;
}

TrainResult train_occlusion_variant(const TrainConfig& tc, GpmConfig gc) {
  gc.n_in = 20;
  gc.skip_mode = SkipMode::kRecurrent;
  gc.validate();
  return train(tc, gc);
}

}  // namespace gpm
