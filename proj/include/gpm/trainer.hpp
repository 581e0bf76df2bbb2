#ifndef GPM_TRAINER_HPP_
#define GPM_TRAINER_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gpm/config.hpp"
#include "gpm/domain.hpp"
#include "gpm/model.hpp"
#include "gpm/simworld.hpp"

namespace gpm {

struct TrainConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  int epochs = 1;
  std::int64_t max_iterations = 0;  // 0: run the configured epochs in full
  int checkpoint_every = 0;         // extra checkpoint cadence; 0: final only
  int log_every = 1;                // CSV row every n iterations
  std::uint64_t seed = 1;
  std::string dataset_dir;
  std::string out_dir;

  void validate() const;  // throws ConfigError
};

// Scalar keys match the field names.
TrainConfig train_config_from(const KeyValueConfig& kv);
void train_config_to(const TrainConfig& cfg, KeyValueConfig& kv);

// Whole sequence resident in memory; desk-scale datasets stay well under
// typical RAM. frames[i] and labels[i] describe the same instant.
struct Dataset {
  std::string dir;
  DatasetManifest manifest;
  std::vector<DogmaFrame> frames;
  std::vector<LabelFrame> labels;
};

Dataset load_dataset(const std::string& dir);  // throws DataError

// Frame index offset of dynamic label i (1-based) from the entry point.
int label_offset(int i, float dt_pred, double frame_rate);

// Inclusive entry-point range [lo, hi] such that a window at t0 keeps its
// n_in inputs and every label index inside [begin, end). Throws DataError
// when no entry point fits.
std::pair<int, int> admissible_t0(const GpmConfig& cfg, double frame_rate,
                                  int begin, int end);

struct TrainWindow {
  int t0 = 0;
  std::vector<Tensor> inputs;           // n_in x [H,W,C], oldest first
  Tensor static_label;                  // [H,W] at t0
  std::vector<Tensor> dynamic_labels;   // n_pred x [H,W] at t0 + offsets
};

// Deterministic window assembly; throws DataError when the window would
// leave the dataset. Inputs never reach past t0, labels never precede it.
TrainWindow window_at(const Dataset& data, const GpmConfig& cfg, int t0);

// Uniform random entry point over the training split.
TrainWindow sample_window(const Dataset& data, const GpmConfig& cfg,
                          std::mt19937_64& rng);

// Checkpoint directory: one .ogt per named tensor, gpm.cfg, and
// checkpoint.txt binding the config hash and iteration count.
void save_checkpoint(const GpmParams& params, const GpmConfig& cfg,
                     std::int64_t iteration, const std::string& dir);

struct Checkpoint {
  GpmParams params;
  GpmConfig config;
  std::int64_t iteration = 0;
};

// Rejects hash mismatches, missing tensors and shape drift. [DataError]
Checkpoint load_checkpoint(const std::string& dir);

struct TrainResult {
  std::int64_t iterations = 0;
  std::int64_t iterations_per_epoch = 0;
  float first_loss = 0.0f;
  float final_loss = 0.0f;
  std::string checkpoint_dir;
  std::string log_path;
};

// Random-entry-point training: per iteration sample_window ->
// forward(training) -> loss -> backward -> adam step. One epoch is one
// iteration per admissible entry point. Writes train_log.csv and a final
// checkpoint under out_dir; a non-finite loss aborts with the failing
// entry point in the message. [ConfigError, DataError, NumericError]
TrainResult train(const TrainConfig& tc, const GpmConfig& gc);

// Long-memory variant: trains with n_in = 20 and recurrent skip
// connections, leaving the rest of the network config untouched.
TrainResult train_occlusion_variant(const TrainConfig& tc, GpmConfig gc);

}  // namespace gpm

#endif  // GPM_TRAINER_HPP_
