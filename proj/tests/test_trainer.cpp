#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "gpm/config.hpp"
#include "gpm/errors.hpp"
#include "gpm/loss.hpp"
#include "gpm/model.hpp"
#include "gpm/ogt.hpp"
#include "gpm/simworld.hpp"
#include "gpm/trainer.hpp"

using namespace gpm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

// In-memory dataset with recognizable per-frame values: frame i stores
// i/100 in its first m_occ cell, labels carry shifted copies.
Dataset synthetic_dataset(int n_frames, int h, int w) {
  Dataset d;
  d.manifest.frame_count = n_frames;
  d.manifest.split_index = n_frames * 4 / 5;
  d.manifest.frame_rate = 10.0;
  d.manifest.width = w;
  d.manifest.height = h;
  d.manifest.v_max = 10.0;
  for (int i = 0; i < n_frames; ++i) {
    DogmaFrame f;
    f.height = h;
    f.width = w;
    f.m_occ.assign(size_t(h) * w, 0.0f);
    f.m_free.assign(size_t(h) * w, 0.0f);
    f.v_e.assign(size_t(h) * w, 0.0f);
    f.v_n.assign(size_t(h) * w, 0.0f);
    f.m_occ[0] = float(i) / 100.0f;
    d.frames.push_back(std::move(f));
    LabelFrame lf;
    lf.height = h;
    lf.width = w;
    lf.y_static.assign(size_t(h) * w, 0.0f);
    lf.y_dynamic.assign(size_t(h) * w, 0.0f);
    lf.y_static[0] = float(i) / 100.0f + 0.5f;
    lf.y_dynamic[0] = float(i) / 100.0f + 0.25f;
    d.labels.push_back(std::move(lf));
  }
  return d;
}

// Small network matched to the 16x16 world below.
GpmConfig tiny_gpm() {
  GpmConfig g;
  g.width = 16;
  g.height = 16;
  g.input_channels = 4;
  g.down_stages = {DownStage{3, 2, 4}, DownStage{3, 2, 6}, DownStage{3, 2, 8}};
  g.latent_channels = 8;
  g.lstm_kernel = 3;
  g.lstm_layers = 1;
  g.n_in = 3;
  g.n_pred = 2;
  g.dt_pred = 0.2f;  // label offsets +2, +4 at 10 Hz
  g.skip_channels = {2, 3, 4};
  g.dropout_rate = 0.0f;
  return g;
}

// One lane, one wall, light traffic; enough signal to overfit against.
WorldConfig tiny_world() {
  WorldConfig c;
  c.width = 16;
  c.height = 16;
  c.sensor_x = 8.5;
  c.sensor_y = 8.5;
  c.ray_step_deg = 2.0;
  c.preroll = 2;
  c.seed = 5;
  c.walls = {{4, 3, 7, 5}};
  c.nodes = {{2, 8.5}, {14, 8.5}};
  c.edges = {{0, 1, 1.0}};
  SpawnerSpec s;
  s.cls = ObjectClass::kVehicle;
  s.rate_hz = 4.0;
  s.speed_min = 2.0;
  s.speed_max = 3.0;
  s.entry_node = 0;
  s.half_w = 0.8;
  s.half_l = 1.2;
  c.spawners = {s};
  return c;
}

const std::string& shared_dataset() {
  static const std::string dir = [] {
    const fs::path p = fs::temp_directory_path() / "gpm_trainer_data";
    fs::remove_all(p);
    generate_dataset(tiny_world(), 40, p.string());
    return p.string();
  }();
  return dir;
}

std::string fresh_out_dir(const char* name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p.string();
}

}  // namespace

TEST_CASE("label offsets follow the prediction grid") {
  // 10 Hz, 0.5 s horizon spacing: +5, +10, +15, +20 frames.
  for (int i = 1; i <= 4; ++i) CHECK(label_offset(i, 0.5f, 10.0) == 5 * i);
  CHECK(label_offset(1, 0.6f, 10.0) == 6);
  CHECK(label_offset(1, 0.25f, 10.0) == 3);  // 2.5 rounds away from zero
  CHECK(label_offset(2, 0.25f, 10.0) == 5);
}

TEST_CASE("admissible entry points keep the whole window inside") {
  GpmConfig g;  // n_in 5, n_pred 4, dt 0.5 -> +20
  const auto [lo, hi] = admissible_t0(g, 10.0, 0, 80);
  CHECK(lo == 4);
  CHECK(hi == 59);

  g.n_in = 20;  // long-memory variant: inputs span 2.0 s
  const auto [lo20, hi20] = admissible_t0(g, 10.0, 0, 80);
  CHECK(lo20 == 19);
  CHECK(hi20 == 59);

  g.n_in = 5;
  const auto [lo1, hi1] = admissible_t0(g, 10.0, 0, 25);
  CHECK(lo1 == 4);
  CHECK(hi1 == 4);  // exactly one admissible entry point
  CHECK_THROWS_AS(admissible_t0(g, 10.0, 0, 24), DataError);
}

TEST_CASE("windows assemble the right frames without future leakage") {
  const Dataset data = synthetic_dataset(40, 8, 8);
  GpmConfig g = tiny_gpm();
  g.width = 8;
  g.height = 8;
  g.dt_pred = 0.5f;  // offsets +5, +10

  const TrainWindow w = window_at(data, g, 12);
  CHECK(w.t0 == 12);
  REQUIRE(w.inputs.size() == 3);
  // Inputs are the frames t0-2, t0-1, t0 in order; cell 0 channel 0 = m_occ.
  CHECK(w.inputs[0].dims() == std::vector<int>{8, 8, 4});
  CHECK(w.inputs[0].data()[0] == 0.10f);
  CHECK(w.inputs[1].data()[0] == 0.11f);
  CHECK(w.inputs[2].data()[0] == 0.12f);
  // Static label sits at t0 exactly; dynamic labels strictly after.
  CHECK(w.static_label.data()[0] == 12.0f / 100.0f + 0.5f);
  REQUIRE(w.dynamic_labels.size() == 2);
  CHECK(w.dynamic_labels[0].data()[0] == 17.0f / 100.0f + 0.25f);
  CHECK(w.dynamic_labels[1].data()[0] == 22.0f / 100.0f + 0.25f);

  GpmConfig g2 = g;
  g2.input_channels = 2;
  CHECK(window_at(data, g2, 12).inputs[0].dims() ==
        std::vector<int>{8, 8, 2});

  CHECK_THROWS_AS(window_at(data, g, 1), DataError);   // inputs reach past 0
  CHECK_THROWS_AS(window_at(data, g, 30), DataError);  // label 40 off the end
  CHECK_NOTHROW(window_at(data, g, 29));
}

TEST_CASE("entry sampling is uniform over the admissible range") {
  const Dataset data = synthetic_dataset(80, 8, 8);  // split_index 64
  GpmConfig g = tiny_gpm();
  g.width = 8;
  g.height = 8;
  g.n_in = 5;
  g.n_pred = 4;
  g.dt_pred = 0.5f;  // t0 range [4, 43], 40 values

  std::mt19937_64 rng(123);
  const int n = 10000;
  std::vector<int> hits(40, 0);
  int lo_seen = 1 << 30, hi_seen = -1;
  for (int s = 0; s < n; ++s) {
    const int t0 = sample_window(data, g, rng).t0;
    REQUIRE(t0 >= 4);
    REQUIRE(t0 <= 43);
    ++hits[t0 - 4];
    lo_seen = std::min(lo_seen, t0);
    hi_seen = std::max(hi_seen, t0);
  }
  CHECK(lo_seen == 4);
  CHECK(hi_seen == 43);
  // Chi-squared over 20 bins of 2 entries each; 19 dof, 0.99 quantile 36.19.
  double chi2 = 0.0;
  const double expected = double(n) / 20.0;
  for (int b = 0; b < 20; ++b) {
    const double obs = hits[2 * b] + hits[2 * b + 1];
    chi2 += (obs - expected) * (obs - expected) / expected;
  }
  CHECK(chi2 < 36.19);
}

TEST_CASE("stored datasets load back with matching shapes") {
  const Dataset d = load_dataset(shared_dataset());
  CHECK(d.manifest.frame_count == 40);
  CHECK(d.manifest.split_index == 32);
  CHECK(d.frames.size() == 40);
  CHECK(d.labels.size() == 40);
  CHECK(d.frames[7].height == 16);
  CHECK(d.frames[7].width == 16);
  CHECK(d.labels[7].y_static.size() == 256);
  CHECK_THROWS_AS(load_dataset(shared_dataset() + "_missing"), DataError);
}

TEST_CASE("training overfits a tiny dataset and logs the curve") {
  TrainConfig tc;
  tc.lr = 1e-3f;
  tc.epochs = 8;
  tc.max_iterations = 200;
  tc.seed = 3;
  tc.dataset_dir = shared_dataset();
  tc.out_dir = fresh_out_dir("gpm_trainer_overfit");
  const GpmConfig gc = tiny_gpm();

  const TrainResult res = train(tc, gc);
  CHECK(res.iterations == 200);
  CHECK(res.iterations_per_epoch == 26);  // t0 in [2, 27]
  CHECK(res.first_loss > 0.0f);
  CHECK(std::isfinite(res.final_loss));
  CHECK(res.final_loss < res.first_loss);

  const std::string log = slurp(res.log_path);
  CHECK(log.rfind("iter,loss,static,dynamic,horizon1,horizon2\n", 0) == 0);
  size_t lines = 0;
  for (char ch : log) lines += (ch == '\n');
  CHECK(lines == 201);  // header + one row per iteration
  CHECK(fs::exists(fs::path(res.checkpoint_dir) / "gpm.cfg"));
  CHECK(fs::exists(fs::path(res.checkpoint_dir) / "checkpoint.txt"));
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  TrainConfig tc;
  tc.lr = 0.0f;
  tc.max_iterations = 5;
  tc.seed = 3;
  tc.dataset_dir = shared_dataset();
  tc.out_dir = fresh_out_dir("gpm_trainer_lr0");
  const GpmConfig gc = tiny_gpm();
  const TrainResult res = train(tc, gc);

  const Checkpoint ck = load_checkpoint(res.checkpoint_dir);
  std::mt19937_64 rng(tc.seed);  // train draws initialization first
  const GpmParams fresh = make_gpm_params(gc, rng, true);
  const auto got = ck.params.named_tensors();
  const auto want = fresh.named_tensors();
  REQUIRE(got.size() == want.size());
  for (size_t i = 0; i < got.size(); ++i) {
    CAPTURE(got[i].first);
    CHECK(got[i].first == want[i].first);
    CHECK(got[i].second.data() == want[i].second.data());
  }
}

TEST_CASE("the same seed replays the identical training run") {
  TrainConfig tc;
  tc.lr = 1e-3f;
  tc.max_iterations = 20;
  tc.seed = 9;
  tc.dataset_dir = shared_dataset();
  const GpmConfig gc = tiny_gpm();

  tc.out_dir = fresh_out_dir("gpm_trainer_replay_a");
  const TrainResult ra = train(tc, gc);
  tc.out_dir = fresh_out_dir("gpm_trainer_replay_b");
  const TrainResult rb = train(tc, gc);

  CHECK(slurp(ra.log_path) == slurp(rb.log_path));
  for (const auto& e : fs::directory_iterator(ra.checkpoint_dir)) {
    const std::string name = e.path().filename().string();
    CAPTURE(name);
    CHECK(slurp(e.path().string()) ==
          slurp(rb.checkpoint_dir + "/" + name));
  }
}

TEST_CASE("a poisoned frame aborts training with a numeric error") {
  const fs::path dir = fs::temp_directory_path() / "gpm_trainer_poison";
  fs::remove_all(dir);
  generate_dataset(tiny_world(), 40, dir.string());
  for (int i = 0; i < 40; ++i) {
    OgtTensor t = read_ogt(dataset_frame_path(dir.string(), i, "dogma"));
    t.data[2] = std::numeric_limits<float>::quiet_NaN();  // cell 0 velocity
    write_ogt(dataset_frame_path(dir.string(), i, "dogma"), t);
  }
  TrainConfig tc;
  tc.max_iterations = 10;
  tc.dataset_dir = dir.string();
  tc.out_dir = fresh_out_dir("gpm_trainer_poison_out");
  try {
    train(tc, tiny_gpm());
    FAIL("training accepted a non-finite loss");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("t0=") != std::string::npos);
  }
}

TEST_CASE("checkpoints round trip bit-exactly and reproduce predictions") {
  GpmConfig gc = tiny_gpm();
  gc.skip_mode = SkipMode::kRecurrent;
  std::mt19937_64 rng(42);
  const GpmParams params = make_gpm_params(gc, rng, true);

  const std::string dir1 = fresh_out_dir("gpm_ckpt_a");
  const std::string dir2 = fresh_out_dir("gpm_ckpt_b");
  save_checkpoint(params, gc, 17, dir1);

  const Checkpoint ck = load_checkpoint(dir1);
  CHECK(ck.iteration == 17);
  CHECK(ck.config.width == gc.width);
  CHECK(ck.config.n_in == gc.n_in);
  CHECK(ck.config.skip_mode == SkipMode::kRecurrent);
  const auto got = ck.params.named_tensors();
  const auto want = params.named_tensors();
  REQUIRE(got.size() == want.size());
  for (size_t i = 0; i < got.size(); ++i) {
    CAPTURE(want[i].first);
    CHECK(got[i].second.data() == want[i].second.data());
  }

  // save -> load -> save writes identical bytes.
  save_checkpoint(ck.params, ck.config, 17, dir2);
  size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir1)) {
    const std::string name = e.path().filename().string();
    CAPTURE(name);
    CHECK(slurp(e.path().string()) == slurp(dir2 + "/" + name));
    ++files;
  }
  CHECK(files == params.named_tensors().size() + 2);  // tensors + cfg + meta

  // The loaded model predicts bitwise the same as the in-memory one.
  std::mt19937_64 drng(7);
  std::vector<Tensor> seq;
  for (int i = 0; i < gc.n_in; ++i) {
    seq.push_back(Tensor::uniform({gc.height, gc.width, gc.input_channels},
                                  0.0f, 1.0f, drng));
  }
  std::mt19937_64 r1(0), r2(0);
  const PredictionBundle a = gpm_forward(seq, params, gc, false, r1);
  const PredictionBundle b = gpm_forward(seq, ck.params, ck.config, false, r2);
  CHECK(a.y_stat.data() == b.y_stat.data());
  REQUIRE(a.y_dyn.size() == b.y_dyn.size());
  for (size_t i = 0; i < a.y_dyn.size(); ++i) {
    CHECK(a.y_dyn[i].data() == b.y_dyn[i].data());
  }
}

TEST_CASE("checkpoints reject tampering and truncation") {
  const GpmConfig gc = tiny_gpm();
  std::mt19937_64 rng(1);
  const GpmParams params = make_gpm_params(gc, rng, true);
  const std::string dir = fresh_out_dir("gpm_ckpt_tamper");
  save_checkpoint(params, gc, 1, dir);
  CHECK_NOTHROW(load_checkpoint(dir));

  // Editing the stored config invalidates the hash binding.
  KeyValueConfig kv = KeyValueConfig::from_file(dir + "/gpm.cfg");
  kv.set("k_i", "41");
  kv.write_file(dir + "/gpm.cfg");
  CHECK_THROWS_AS(load_checkpoint(dir), DataError);
  KeyValueConfig orig;
  gpm_config_to(gc, orig);
  orig.write_file(dir + "/gpm.cfg");
  CHECK_NOTHROW(load_checkpoint(dir));

  // Truncated tensor payload.
  const std::string victim = dir + "/down1.k.ogt";
  const std::string bytes = slurp(victim);
  std::ofstream(victim, std::ios::binary)
      .write(bytes.data(), std::streamsize(bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(dir), DataError);
  std::ofstream(victim, std::ios::binary)
      .write(bytes.data(), std::streamsize(bytes.size()));
  CHECK_NOTHROW(load_checkpoint(dir));

  // Missing tensor file.
  fs::remove(dir + "/down2.b.ogt");
  CHECK_THROWS_AS(load_checkpoint(dir), DataError);
}

TEST_CASE("the occlusion variant trains long windows with recurrent skips") {
  TrainConfig tc;
  tc.lr = 1e-3f;
  tc.max_iterations = 2;
  tc.dataset_dir = shared_dataset();
  tc.out_dir = fresh_out_dir("gpm_trainer_occl");
  const TrainResult res = train_occlusion_variant(tc, tiny_gpm());

  // t0 range [19, 27]: 20 inputs (2.0 s) plus +4 label frames fit in 32.
  CHECK(res.iterations_per_epoch == 9);
  const Checkpoint ck = load_checkpoint(res.checkpoint_dir);
  CHECK(ck.config.n_in == 20);
  CHECK(ck.config.skip_mode == SkipMode::kRecurrent);
  CHECK(ck.params.skip_cells.size() == 3);
}

TEST_CASE("live tensor count grows linearly with sequence length") {
  const GpmConfig base = tiny_gpm();
  std::mt19937_64 rng(11);
  const GpmParams params = make_gpm_params(base, rng, true);

  auto graph_nodes = [&](int n_in) {
    GpmConfig g = base;
    g.n_in = n_in;
    std::vector<Tensor> seq;
    for (int i = 0; i < n_in; ++i) {
      seq.push_back(Tensor::uniform({g.height, g.width, g.input_channels},
                                    0.0f, 1.0f, rng));
    }
    const std::int64_t before = detail::TensorNode::live_count();
    std::mt19937_64 r(0);
    const PredictionBundle b = gpm_forward(seq, params, g, false, r);
    (void)b;
    return detail::TensorNode::live_count() - before;
  };

  const std::int64_t c2 = graph_nodes(2);
  const std::int64_t c4 = graph_nodes(4);
  const std::int64_t c6 = graph_nodes(6);
  CHECK(c4 > c2);
  CHECK(c6 - c4 == c4 - c2);  // constant per-frame graph growth
}

TEST_CASE("train config round trips and validates") {
  TrainConfig c;
  c.lr = 0.00025f;
  c.beta1 = 0.875f;
  c.beta2 = 0.9990234375f;
  c.epochs = 3;
  c.max_iterations = 1000;
  c.checkpoint_every = 250;
  c.log_every = 10;
  c.seed = 77;
  c.dataset_dir = "data/train";
  c.out_dir = "runs/a";
  KeyValueConfig kv;
  train_config_to(c, kv);
  const TrainConfig r = train_config_from(kv);
  CHECK(r.lr == c.lr);
  CHECK(r.beta1 == c.beta1);
  CHECK(r.beta2 == c.beta2);
  CHECK(r.epochs == c.epochs);
  CHECK(r.max_iterations == c.max_iterations);
  CHECK(r.checkpoint_every == c.checkpoint_every);
  CHECK(r.log_every == c.log_every);
  CHECK(r.seed == c.seed);
  CHECK(r.dataset_dir == c.dataset_dir);
  CHECK(r.out_dir == c.out_dir);

  auto broken = [&](auto mutate) {
    TrainConfig b = c;
    mutate(b);
    return b;
  };
  CHECK_THROWS_AS(broken([](TrainConfig& b) { b.lr = -1; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(broken([](TrainConfig& b) { b.beta1 = 1.0f; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(broken([](TrainConfig& b) { b.epochs = 0; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(broken([](TrainConfig& b) { b.log_every = 0; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(
      broken([](TrainConfig& b) { b.dataset_dir.clear(); }).validate(),
      ConfigError);
}
