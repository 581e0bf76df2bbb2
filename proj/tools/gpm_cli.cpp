// Command-line front end: dataset generation, training, prediction,
// evaluation, scripted scenarios and frame rendering. Every flag maps to one
// config key; flags override values from --config; the merged config is
// echoed to <out>/effective_config.txt. Exit codes: 0 success, 1 usage,
// 2 config/data error, 3 numerical abort.

#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gpm/config.hpp"
#include "gpm/domain.hpp"
#include "gpm/errors.hpp"
#include "gpm/eval.hpp"
#include "gpm/model.hpp"
#include "gpm/ogt.hpp"
#include "gpm/scenarios.hpp"
#include "gpm/simworld.hpp"
#include "gpm/trainer.hpp"

namespace fs = std::filesystem;
using namespace gpm;

namespace {

// Collects a subcommand's flags as config-key overrides on top of --config.
struct FlagLayer {
  CLI::App* cmd;
  std::string config_path;
  struct Binding {
    CLI::Option* opt;
    std::string key;
    std::string* slot;
  };
  std::deque<std::string> slots;  // stable addresses for CLI11 targets
  std::vector<Binding> bindings;

  explicit FlagLayer(CLI::App* c) : cmd(c) {
    cmd->add_option("--config", config_path, "key=value config file");
  }

  void bind(const std::string& flag, const std::string& key,
            const std::string& help) {
    slots.emplace_back();
    CLI::Option* opt = cmd->add_option(flag, slots.back(), help);
    bindings.push_back(Binding{opt, key, &slots.back()});
  }

  KeyValueConfig resolve() const {
    KeyValueConfig kv;
    if (!config_path.empty()) kv = KeyValueConfig::from_file(config_path);
    for (const Binding& b : bindings) {
      if (b.opt->count() > 0) kv.set(b.key, *b.slot);
    }
    return kv;
  }
};

std::string require_key(const KeyValueConfig& kv, const std::string& key,
                        const std::string& flag) {
  if (!kv.has(key)) {
    throw ConfigError("missing required key '" + key + "' (flag " + flag +
                      ")");
  }
  return kv.get(key);
}

void echo_config(const KeyValueConfig& kv, const std::string& out_dir) {
  if (out_dir.empty()) return;
  fs::create_directories(out_dir);
  kv.write_file(out_dir + "/effective_config.txt");
}

int run_gen(const KeyValueConfig& kv) {
  const WorldConfig wc = world_config_from(kv);
  require_key(kv, "frames", "--frames");
  const int frames = kv.get_int("frames");
  const std::string out = require_key(kv, "out", "--out");
  echo_config(kv, out);
  const DatasetManifest m = generate_dataset(wc, frames, out);
  std::printf("RESULT frames=%d split=%d width=%d height=%d dir=%s\n",
              m.frame_count, m.split_index, m.width, m.height, out.c_str());
  return 0;
}

int run_train(const KeyValueConfig& kv) {
  const TrainConfig tc = train_config_from(kv);
  const GpmConfig gc = gpm_config_from(kv);
  echo_config(kv, tc.out_dir);
  const TrainResult res = train(tc, gc);
  std::printf(
      "RESULT iterations=%lld per_epoch=%lld first_loss=%.6f "
      "final_loss=%.6f checkpoint=%s log=%s\n",
      static_cast<long long>(res.iterations),
      static_cast<long long>(res.iterations_per_epoch),
      double(res.first_loss), double(res.final_loss),
      res.checkpoint_dir.c_str(), res.log_path.c_str());
  return 0;
}

int run_predict(const KeyValueConfig& kv) {
  const Checkpoint ck = load_checkpoint(require_key(kv, "ckpt", "--ckpt"));
  const Dataset data = load_dataset(require_key(kv, "data", "--data"));
  const std::string out = require_key(kv, "out", "--out");
  int t0 = kv.get_int_or("t0", -1);
  if (t0 < 0) {
    // First admissible test-split entry point.
    t0 = admissible_t0(ck.config, data.manifest.frame_rate,
                       data.manifest.split_index, data.manifest.frame_count)
             .first;
  }
  const TrainWindow w = window_at(data, ck.config, t0);
  std::mt19937_64 rng(0);  // inference: dropout inactive
  const PredictionBundle b =
      gpm_forward(w.inputs, ck.params, ck.config, false, rng);

  echo_config(kv, out);
  const int h = ck.config.height, wd = ck.config.width;
  write_ogt(out + "/static.ogt", {h, wd}, b.y_stat.data().data());
  write_pixmap(render_comparison(b.y_stat.data(), w.static_label.data(), h, wd),
               out + "/static.ppm");
  for (size_t i = 0; i < b.y_dyn.size(); ++i) {
    const std::string stem = out + "/dynamic_h" + std::to_string(i + 1);
    write_ogt(stem + ".ogt", {h, wd}, b.y_dyn[i].data().data());
    write_pixmap(render_comparison(b.y_dyn[i].data(),
                                   w.dynamic_labels[i].data(), h, wd),
                 stem + ".ppm");
  }
  std::printf("RESULT t0=%d horizons=%d out=%s\n", t0, int(b.y_dyn.size()),
              out.c_str());
  return 0;
}

int run_eval(const KeyValueConfig& kv) {
  EvalConfig ec;
  ec.checkpoint_dir = require_key(kv, "ckpt", "--ckpt");
  ec.dataset_dir = require_key(kv, "data", "--data");
  ec.out_dir = kv.get_or("out", "");
  ec.stride = kv.get_int_or("stride", ec.stride);
  echo_config(kv, ec.out_dir);
  const EvalResult res = evaluate_dataset(ec);
  std::string line = "RESULT windows=" + std::to_string(res.windows);
  char buf[64];
  for (size_t i = 0; i < res.f1.per_horizon.size(); ++i) {
    std::snprintf(buf, sizeof(buf), " f1_h%zu=%.4f", i + 1,
                  res.f1.per_horizon[i].f1);
    line += buf;
  }
  std::printf("%s\n", line.c_str());
  return 0;
}

int run_scenarios(const KeyValueConfig& kv) {
  ScenarioSuiteConfig sc;
  sc.interaction_checkpoint =
      require_key(kv, "interaction_ckpt", "--interaction-ckpt");
  sc.feedforward_checkpoint = require_key(kv, "ff_ckpt", "--ff-ckpt");
  sc.recurrent_checkpoint = require_key(kv, "rec_ckpt", "--rec-ckpt");
  sc.interaction_world =
      require_key(kv, "interaction_world", "--interaction-world");
  sc.occlusion_world = require_key(kv, "occlusion_world", "--occlusion-world");
  sc.out_dir = kv.get_or("out", "");
  echo_config(kv, sc.out_dir);
  const ScenarioReport rep = scenario_suite(sc);

  double components_max = 0.0;
  for (const ScenarioResult& r : rep.results) {
    if (r.name != "multimodal_turn") continue;
    for (const ScenarioMetric& m : r.metrics) {
      if (m.name.rfind("components_", 0) == 0 && m.value > components_max) {
        components_max = m.value;
      }
    }
  }
  std::printf(
      "RESULT ped_ff=%.4f ped_rec=%.4f advance_reduction=%.4f "
      "components_max=%g report=%s\n",
      rep.metric("occluded_pedestrian", "ff_footprint_mean"),
      rep.metric("occluded_pedestrian", "rec_footprint_mean"),
      rep.metric("crossing_interaction", "advance_reduction"), components_max,
      rep.report_path.empty() ? "-" : rep.report_path.c_str());
  return 0;
}

int run_render(const KeyValueConfig& kv) {
  const Dataset data = load_dataset(require_key(kv, "data", "--data"));
  const std::string out = require_key(kv, "out", "--out");
  const int from = kv.get_int_or("from", 0);
  const int to = kv.get_int_or("to", data.manifest.frame_count - 1);
  if (from < 0 || to >= data.manifest.frame_count || from > to) {
    throw ConfigError("render: frame range [" + std::to_string(from) + ", " +
                      std::to_string(to) + "] outside the dataset");
  }
  echo_config(kv, out);
  const int h = data.manifest.height, w = data.manifest.width;
  for (int k = from; k <= to; ++k) {
    const DogmaFrame& f = data.frames[size_t(k)];
    const LabelFrame& lf = data.labels[size_t(k)];
    std::vector<float> po(f.m_occ.size()), truth(f.m_occ.size());
    for (size_t c = 0; c < po.size(); ++c) {
      po[c] = occupancy_probability(f.m_occ[c], f.m_free[c]);
      truth[c] = std::min(1.0f, lf.y_static[c] + lf.y_dynamic[c]);
    }
    char name[32];
    std::snprintf(name, sizeof(name), "/frame_%06d.ppm", k);
    write_pixmap(render_comparison(po, truth, h, w), out + name);
  }
  std::printf("RESULT frames=%d out=%s\n", to - from + 1, out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grid sequence prediction toolkit"};
  app.require_subcommand(1);

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  FlagLayer lg(gen);
  lg.bind("--frames", "frames", "frames to record");
  lg.bind("--out", "out", "dataset output directory");
  lg.bind("--seed", "seed", "world seed");

  CLI::App* train = app.add_subcommand("train", "train a model");
  FlagLayer lt(train);
  lt.bind("--data", "dataset_dir", "dataset directory");
  lt.bind("--out", "out_dir", "checkpoint/log output directory");
  lt.bind("--seed", "seed", "training seed");
  lt.bind("--epochs", "epochs", "training epochs");
  lt.bind("--iters", "max_iterations", "iteration cap (0: full epochs)");
  lt.bind("--lr", "lr", "learning rate");
  lt.bind("--log-every", "log_every", "CSV logging cadence");
  lt.bind("--n-in", "n_in", "input sequence length");
  lt.bind("--skip-mode", "skip_mode", "feedforward|recurrent");

  CLI::App* predict = app.add_subcommand("predict", "run one window");
  FlagLayer lp(predict);
  lp.bind("--ckpt", "ckpt", "checkpoint directory");
  lp.bind("--data", "data", "dataset directory");
  lp.bind("--t0", "t0", "entry frame (default: first test window)");
  lp.bind("--out", "out", "prediction dump directory");

  CLI::App* eval = app.add_subcommand("eval", "evaluate on the test split");
  FlagLayer le(eval);
  le.bind("--ckpt", "ckpt", "checkpoint directory");
  le.bind("--data", "data", "dataset directory");
  le.bind("--stride", "stride", "entry-point stride");
  le.bind("--out", "out", "report directory (omit: print only)");

  CLI::App* scen = app.add_subcommand("scenarios", "run the scripted suite");
  FlagLayer ls(scen);
  ls.bind("--interaction-ckpt", "interaction_ckpt", "branch/crossing model");
  ls.bind("--ff-ckpt", "ff_ckpt", "short-memory occlusion model");
  ls.bind("--rec-ckpt", "rec_ckpt", "long-memory occlusion model");
  ls.bind("--interaction-world", "interaction_world", "world config");
  ls.bind("--occlusion-world", "occlusion_world", "world config");
  ls.bind("--out", "out", "report directory (omit: print only)");

  CLI::App* render = app.add_subcommand("render", "render dataset frames");
  FlagLayer lr(render);
  lr.bind("--data", "data", "dataset directory");
  lr.bind("--from", "from", "first frame (default 0)");
  lr.bind("--to", "to", "last frame (default: final)");
  lr.bind("--out", "out", "pixmap output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n"
              << "run with --help for usage\n";
    return 1;
  }

  try {
    if (app.got_subcommand(gen)) return run_gen(lg.resolve());
    if (app.got_subcommand(train)) return run_train(lt.resolve());
    if (app.got_subcommand(predict)) return run_predict(lp.resolve());
    if (app.got_subcommand(eval)) return run_eval(le.resolve());
    if (app.got_subcommand(scen)) return run_scenarios(ls.resolve());
    if (app.got_subcommand(render)) return run_render(lr.resolve());
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
