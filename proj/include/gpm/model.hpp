#ifndef GPM_MODEL_HPP_
#define GPM_MODEL_HPP_

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gpm/config.hpp"
#include "gpm/convlstm.hpp"
#include "gpm/ops.hpp"
#include "gpm/tensor.hpp"

namespace gpm {

enum class SkipMode { kFeedforward, kRecurrent };

struct DownStage {
  int kernel = 3;
  int stride = 2;
  int channels = 0;
};

// Full architecture description. The downscale stack reduces [H,W,C] to the
// latent raster in three strided stages; a stacked ConvLSTM encoder absorbs
// n_in frames; a decoder initialized from the encoder states rolls n_pred
// steps; two independent transposed-conv paths (static, dynamic) restore the
// input resolution with skip concatenations at each stage.
struct GpmConfig {
  int width = 64;
  int height = 64;
  int input_channels = 4;  // 2 = velocity-ablation variant
  std::array<DownStage, 3> down_stages{
      DownStage{3, 2, 32}, DownStage{3, 2, 64}, DownStage{3, 2, 128}};
  Padding padding = Padding::kSame;
  int latent_channels = 128;  // must equal down_stages[2].channels
  int lstm_kernel = 3;
  int lstm_layers = 2;
  int n_in = 5;
  int n_pred = 4;
  float dt_pred = 0.5f;
  SkipMode skip_mode = SkipMode::kFeedforward;
  std::array<int, 3> skip_channels{16, 32, 64};  // recurrent-skip hidden sizes
  float dropout_rate = 0.2f;
  float k_o = 1.0f;   // static/dynamic loss balance
  float k_i = 40.0f;  // dynamic-cell weight gain

  void validate() const;  // throws ConfigError
  // Spatial dims after each downscale stage; [0] is the input size.
  std::array<std::pair<int, int>, 4> stage_dims() const;
};

GpmConfig gpm_config_from(const KeyValueConfig& kv);
void gpm_config_to(const GpmConfig& cfg, KeyValueConfig& kv);
std::string skip_mode_name(SkipMode mode);

// One upscale branch: three transposed convs (strides mirror the downscale
// stages in reverse) and a 1x1 sigmoid head.
struct UpscalePath {
  std::array<Tensor, 3> kernels;  // [k,k,Cout,Cin]
  std::array<Tensor, 3> biases;
  Tensor head_kernel;  // [1,1,C,1]
  Tensor head_bias;    // [1]
};

struct GpmParams {
  std::array<Tensor, 3> down_kernels;
  std::array<Tensor, 3> down_biases;
  std::vector<ConvLstmParams> encoder;  // lstm_layers cells
  std::vector<ConvLstmParams> decoder;
  UpscalePath static_path;
  UpscalePath dynamic_path;
  std::vector<ConvLstmParams> skip_cells;  // per stage; empty in feedforward

  // Stable name->tensor enumeration used by the optimizer and checkpoints.
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
  std::vector<Tensor> tensors() const;
};

GpmParams make_gpm_params(const GpmConfig& cfg, std::mt19937_64& rng,
                          bool trainable = true);
std::int64_t param_count(const std::vector<Tensor>& tensors);
std::int64_t param_count(const GpmParams& params);

struct PredictionBundle {
  Tensor y_stat;              // [H,W], sigmoid output
  std::vector<Tensor> y_dyn;  // n_pred rasters [H,W]
  std::vector<float> horizons_s;
};

struct EncodeResult {
  std::vector<ConvLstmState> encoder_states;
  // Skip signal per stage resolution (index 0 = highest resolution). In
  // feedforward mode these are the last frame's stage activations; in
  // recurrent mode the skip-cell hidden states after the full sequence.
  std::array<Tensor, 3> skips;
  Tensor y_stat;
};

// Three conv+ReLU stages; returns each stage's activation, [2] = latent.
std::array<Tensor, 3> downscale(const Tensor& x, const GpmParams& params,
                                const GpmConfig& cfg);

EncodeResult encode(const std::vector<Tensor>& sequence,
                    const GpmParams& params, const GpmConfig& cfg,
                    bool training, std::mt19937_64& rng);

// Rolls the decoder n_pred steps from the encoder states; the decoder input
// is a zero tensor each step (state-driven decoding).
std::vector<Tensor> decode(const std::vector<ConvLstmState>& encoder_states,
                           const GpmParams& params, const GpmConfig& cfg,
                           int n_pred, bool training, std::mt19937_64& rng);

// Upscales one latent through a path with skip concatenations; [H,W] sigmoid
// raster. The same path tensors serve every horizon.
Tensor upscale(const Tensor& latent, const std::array<Tensor, 3>& skips,
               const UpscalePath& path, const GpmConfig& cfg);

PredictionBundle gpm_forward(const std::vector<Tensor>& sequence,
                             const GpmParams& params, const GpmConfig& cfg,
                             bool training, std::mt19937_64& rng);

}  // namespace gpm

#endif  // GPM_MODEL_HPP_
