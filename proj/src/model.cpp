#include "gpm/model.hpp"

#include <cassert>
#include <cmath>

#include "gpm/errors.hpp"

namespace gpm {
namespace {

struct UpStagePlan {
  int kernel = 0;
  int stride = 0;
  int in_c = 0;
  int out_c = 0;
};

int skip_width(const GpmConfig& cfg, int stage) {
  return cfg.skip_mode == SkipMode::kRecurrent ? cfg.skip_channels[stage]
                                               : cfg.down_stages[stage].channels;
}

// Upscale stage j inverts downscale stage 2-j. Output widths step back down
// the downscale pyramid; the final stage halves the first-stage width so the
// 1x1 head sees a compact feature map.
std::array<UpStagePlan, 3> upscale_plan(const GpmConfig& cfg) {
  const auto& st = cfg.down_stages;
  std::array<UpStagePlan, 3> plan;
  plan[0] = {st[2].kernel, st[2].stride, cfg.latent_channels + skip_width(cfg, 2),
             st[1].channels};
  plan[1] = {st[1].kernel, st[1].stride, st[1].channels + skip_width(cfg, 1),
             st[0].channels};
  plan[2] = {st[0].kernel, st[0].stride, st[0].channels + skip_width(cfg, 0),
             std::max(st[0].channels / 2, 4)};
  return plan;
}

Tensor init_kernel(const std::vector<int>& dims, int fan_in,
                   std::mt19937_64& rng, bool trainable) {
  const float s = std::sqrt(1.0f / float(fan_in));
  return Tensor::uniform(dims, -s, s, rng, trainable);
}

UpscalePath make_path(const GpmConfig& cfg, std::mt19937_64& rng,
                      bool trainable) {
  UpscalePath p;
  const auto plan = upscale_plan(cfg);
  for (int j = 0; j < 3; ++j) {
    const auto& s = plan[j];
    p.kernels[j] = init_kernel({s.kernel, s.kernel, s.out_c, s.in_c},
                               s.kernel * s.kernel * s.in_c, rng, trainable);
    p.biases[j] = Tensor::zeros({s.out_c}, trainable);
  }
  p.head_kernel =
      init_kernel({1, 1, plan[2].out_c, 1}, plan[2].out_c, rng, trainable);
  // Occupancy rasters are overwhelmingly empty; a zero bias starts the
  // sigmoid at 0.5 and the synchronized pull toward "empty" saturates the
  // rare positives before their features form. Starting near the base rate
  // keeps their gradients alive.
  p.head_bias = Tensor::from_data({1}, {-2.0f}, trainable);
  return p;
}

void append_path(std::vector<std::pair<std::string, Tensor>>& out,
                 const std::string& prefix, const UpscalePath& p) {
  for (int j = 0; j < 3; ++j) {
    out.emplace_back(prefix + std::to_string(j + 1) + ".k", p.kernels[j]);
    out.emplace_back(prefix + std::to_string(j + 1) + ".b", p.biases[j]);
  }
  out.emplace_back(prefix + "head.k", p.head_kernel);
  out.emplace_back(prefix + "head.b", p.head_bias);
}

}  // namespace

void GpmConfig::validate() const {
  if (width < 1 || height < 1) throw ConfigError("grid dims must be positive");
  if (input_channels != 2 && input_channels != 4) {
    throw ConfigError("input_channels must be 2 or 4");
  }
  if (latent_channels != down_stages[2].channels) {
    throw ConfigError("latent_channels must equal the third stage's channels");
  }
  for (const DownStage& s : down_stages) {
    if (s.kernel < 1 || s.kernel % 2 == 0 || s.stride < 1 || s.channels < 1) {
      throw ConfigError("downscale stages need odd kernels, positive stride/channels");
    }
  }
  if (padding == Padding::kSame) {
    // Exact divisibility keeps transposed stages shape-inverse to the
    // downscale stages, so skip concatenations align without cropping.
    int h = height, w = width;
    for (const DownStage& s : down_stages) {
      if (h % s.stride != 0 || w % s.stride != 0) {
        throw ConfigError("same padding requires stage sizes divisible by stride");
      }
      h /= s.stride;
      w /= s.stride;
    }
  } else {
    stage_dims();  // throws if any valid-padding stage does not divide
  }
  if (lstm_kernel < 1 || lstm_kernel % 2 == 0) {
    throw ConfigError("lstm_kernel must be odd");
  }
  if (lstm_layers < 1) throw ConfigError("lstm_layers must be >= 1");
  if (n_in < 1 || n_pred < 1) throw ConfigError("n_in and n_pred must be >= 1");
  if (dt_pred <= 0.0f) throw ConfigError("dt_pred must be positive");
  if (dropout_rate < 0.0f || dropout_rate >= 1.0f) {
    throw ConfigError("dropout_rate must be in [0,1)");
  }
  if (skip_mode == SkipMode::kRecurrent) {
    for (int c : skip_channels) {
      if (c < 1) throw ConfigError("skip_channels must be positive");
    }
  }
  if (k_i < 0.0f) throw ConfigError("k_i must be non-negative");
}

std::array<std::pair<int, int>, 4> GpmConfig::stage_dims() const {
  std::array<std::pair<int, int>, 4> dims;
  dims[0] = {height, width};
  for (int i = 0; i < 3; ++i) {
    dims[i + 1] = conv_output_hw(dims[i].first, dims[i].second,
                                 down_stages[i].kernel, down_stages[i].stride,
                                 padding);
  }
  return dims;
}

GpmConfig gpm_config_from(const KeyValueConfig& kv) {
  GpmConfig d;  // defaults
  GpmConfig c;
  c.width = kv.get_int_or("width", d.width);
  c.height = kv.get_int_or("height", d.height);
  c.input_channels = kv.get_int_or("input_channels", d.input_channels);
  for (int i = 0; i < 3; ++i) {
    const std::string p = "stage" + std::to_string(i + 1) + ".";
    c.down_stages[i].kernel = kv.get_int_or(p + "kernel", d.down_stages[i].kernel);
    c.down_stages[i].stride = kv.get_int_or(p + "stride", d.down_stages[i].stride);
    c.down_stages[i].channels =
        kv.get_int_or(p + "channels", d.down_stages[i].channels);
  }
  const std::string pad = kv.get_or("padding", "same");
  if (pad == "same") {
    c.padding = Padding::kSame;
  } else if (pad == "valid") {
    c.padding = Padding::kValid;
  } else {
    throw ConfigError("padding must be 'same' or 'valid', got '" + pad + "'");
  }
  c.latent_channels = kv.get_int_or("latent_channels", c.down_stages[2].channels);
  c.lstm_kernel = kv.get_int_or("lstm_kernel", d.lstm_kernel);
  c.lstm_layers = kv.get_int_or("lstm_layers", d.lstm_layers);
  c.n_in = kv.get_int_or("n_in", d.n_in);
  c.n_pred = kv.get_int_or("n_pred", d.n_pred);
  c.dt_pred = kv.get_float_or("dt_pred", d.dt_pred);
  const std::string mode = kv.get_or("skip_mode", "feedforward");
  if (mode == "feedforward") {
    c.skip_mode = SkipMode::kFeedforward;
  } else if (mode == "recurrent") {
    c.skip_mode = SkipMode::kRecurrent;
  } else {
    throw ConfigError("skip_mode must be 'feedforward' or 'recurrent', got '" +
                      mode + "'");
  }
  for (int i = 0; i < 3; ++i) {
    // Default recurrent-skip width: half the tapped stage's channels.
    c.skip_channels[i] =
        kv.get_int_or("skip" + std::to_string(i + 1) + ".channels",
                      std::max(c.down_stages[i].channels / 2, 1));
  }
  c.dropout_rate = kv.get_float_or("dropout_rate", d.dropout_rate);
  c.k_o = kv.get_float_or("k_o", d.k_o);
  c.k_i = kv.get_float_or("k_i", d.k_i);
  c.validate();
  return c;
}

void gpm_config_to(const GpmConfig& cfg, KeyValueConfig& kv) {
  kv.set_int("width", cfg.width);
  kv.set_int("height", cfg.height);
  kv.set_int("input_channels", cfg.input_channels);
  for (int i = 0; i < 3; ++i) {
    const std::string p = "stage" + std::to_string(i + 1) + ".";
    kv.set_int(p + "kernel", cfg.down_stages[i].kernel);
    kv.set_int(p + "stride", cfg.down_stages[i].stride);
    kv.set_int(p + "channels", cfg.down_stages[i].channels);
  }
  kv.set("padding", cfg.padding == Padding::kSame ? "same" : "valid");
  kv.set_int("latent_channels", cfg.latent_channels);
  kv.set_int("lstm_kernel", cfg.lstm_kernel);
  kv.set_int("lstm_layers", cfg.lstm_layers);
  kv.set_int("n_in", cfg.n_in);
  kv.set_int("n_pred", cfg.n_pred);
  kv.set_float("dt_pred", cfg.dt_pred);
  kv.set("skip_mode", skip_mode_name(cfg.skip_mode));
  for (int i = 0; i < 3; ++i) {
    kv.set_int("skip" + std::to_string(i + 1) + ".channels",
               cfg.skip_channels[i]);
  }
  kv.set_float("dropout_rate", cfg.dropout_rate);
  kv.set_float("k_o", cfg.k_o);
  kv.set_float("k_i", cfg.k_i);
}

std::string skip_mode_name(SkipMode mode) {
  return mode == SkipMode::kRecurrent ? "recurrent" : "feedforward";
}

GpmParams make_gpm_params(const GpmConfig& cfg, std::mt19937_64& rng,
                          bool trainable) {
  cfg.validate();
  GpmParams p;
  int cin = cfg.input_channels;
  for (int i = 0; i < 3; ++i) {
    const DownStage& s = cfg.down_stages[i];
    p.down_kernels[i] = init_kernel({s.kernel, s.kernel, cin, s.channels},
                                    s.kernel * s.kernel * cin, rng, trainable);
    p.down_biases[i] = Tensor::zeros({s.channels}, trainable);
    cin = s.channels;
  }
  int lstm_in = cfg.latent_channels;
  for (int l = 0; l < cfg.lstm_layers; ++l) {
    p.encoder.push_back(make_convlstm_params(cfg.lstm_kernel, lstm_in,
                                             cfg.latent_channels, rng,
                                             trainable));
    lstm_in = cfg.latent_channels;
  }
  lstm_in = cfg.latent_channels;
  for (int l = 0; l < cfg.lstm_layers; ++l) {
    p.decoder.push_back(make_convlstm_params(cfg.lstm_kernel, lstm_in,
                                             cfg.latent_channels, rng,
                                             trainable));
    lstm_in = cfg.latent_channels;
  }
  p.static_path = make_path(cfg, rng, trainable);
  p.dynamic_path = make_path(cfg, rng, trainable);
  if (cfg.skip_mode == SkipMode::kRecurrent) {
    for (int i = 0; i < 3; ++i) {
      p.skip_cells.push_back(
          make_convlstm_params(cfg.lstm_kernel, cfg.down_stages[i].channels,
                               cfg.skip_channels[i], rng, trainable));
    }
  }
  return p;
}

std::vector<std::pair<std::string, Tensor>> GpmParams::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (int i = 0; i < 3; ++i) {
    out.emplace_back("down" + std::to_string(i + 1) + ".k", down_kernels[i]);
    out.emplace_back("down" + std::to_string(i + 1) + ".b", down_biases[i]);
  }
  for (size_t l = 0; l < encoder.size(); ++l) {
    auto named = encoder[l].named_tensors("enc" + std::to_string(l + 1));
    out.insert(out.end(), named.begin(), named.end());
  }
  for (size_t l = 0; l < decoder.size(); ++l) {
    auto named = decoder[l].named_tensors("dec" + std::to_string(l + 1));
    out.insert(out.end(), named.begin(), named.end());
  }
  append_path(out, "up_s", static_path);
  append_path(out, "up_d", dynamic_path);
  for (size_t i = 0; i < skip_cells.size(); ++i) {
    auto named = skip_cells[i].named_tensors("skip" + std::to_string(i + 1));
    out.insert(out.end(), named.begin(), named.end());
  }
  return out;
}

std::vector<Tensor> GpmParams::tensors() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named_tensors()) out.push_back(t);
  return out;
}

std::int64_t param_count(const std::vector<Tensor>& tensors) {
  std::int64_t n = 0;
  for (const Tensor& t : tensors) n += t.size();
  return n;
}

std::int64_t param_count(const GpmParams& params) {
  return param_count(params.tensors());
}

std::array<Tensor, 3> downscale(const Tensor& x, const GpmParams& params,
                                const GpmConfig& cfg) {
  if (x.rank() != 3 || x.dims()[0] != cfg.height || x.dims()[1] != cfg.width ||
      x.dims()[2] != cfg.input_channels) {
    throw ConfigError("downscale: frame dims do not match config");
  }
  std::array<Tensor, 3> acts;
  Tensor cur = x;
  for (int i = 0; i < 3; ++i) {
    cur = relu(conv2d(cur, params.down_kernels[i], params.down_biases[i],
                      cfg.down_stages[i].stride, cfg.padding));
    acts[i] = cur;
  }
  return acts;
}

EncodeResult encode(const std::vector<Tensor>& sequence,
                    const GpmParams& params, const GpmConfig& cfg,
                    bool training, std::mt19937_64& rng) {
  if (int(sequence.size()) != cfg.n_in) {
    throw ConfigError("encode: sequence length must equal n_in");
  }
  const auto dims = cfg.stage_dims();
  const auto [h3, w3] = dims[3];

  std::vector<ConvLstmState> states;
  for (int l = 0; l < cfg.lstm_layers; ++l) {
    states.push_back(zero_state(h3, w3, cfg.latent_channels));
  }
  std::vector<ConvLstmState> skip_states;
  if (cfg.skip_mode == SkipMode::kRecurrent) {
    for (int i = 0; i < 3; ++i) {
      skip_states.push_back(zero_state(dims[i + 1].first, dims[i + 1].second,
                                       cfg.skip_channels[i]));
    }
  }

  std::array<Tensor, 3> last_acts;
  for (const Tensor& frame : sequence) {
    last_acts = downscale(frame, params, cfg);
    if (cfg.skip_mode == SkipMode::kRecurrent) {
      for (int i = 0; i < 3; ++i) {
        skip_states[i] =
            convlstm_step(params.skip_cells[i], skip_states[i], last_acts[i],
                          cfg.dropout_rate, training, rng);
      }
    }
    auto [next, y] = stack_forward(params.encoder, states, last_acts[2],
                                   cfg.dropout_rate, training, rng);
    states = std::move(next);
  }

  EncodeResult r;
  r.encoder_states = std::move(states);
  if (cfg.skip_mode == SkipMode::kRecurrent) {
    for (int i = 0; i < 3; ++i) r.skips[i] = skip_states[i].h;
  } else {
    r.skips = last_acts;
  }
  r.y_stat =
      upscale(r.encoder_states.back().h, r.skips, params.static_path, cfg);
  return r;
}

std::vector<Tensor> decode(const std::vector<ConvLstmState>& encoder_states,
                           const GpmParams& params, const GpmConfig& cfg,
                           int n_pred, bool training, std::mt19937_64& rng) {
  if (n_pred < 1) throw ConfigError("decode: n_pred must be >= 1");
  if (encoder_states.size() != params.decoder.size()) {
    throw ConfigError("decode: encoder state count does not match decoder");
  }
  const Tensor& h = encoder_states.back().h;
  // State-driven decoding: the per-step input carries no information.
  Tensor zero_in =
      Tensor::zeros({h.dims()[0], h.dims()[1], cfg.latent_channels});
  std::vector<ConvLstmState> states = encoder_states;
  std::vector<Tensor> latents;
  latents.reserve(n_pred);
  for (int i = 0; i < n_pred; ++i) {
    auto [next, y] = stack_forward(params.decoder, states, zero_in,
                                   cfg.dropout_rate, training, rng);
    states = std::move(next);
    latents.push_back(y);
  }
  return latents;
}

Tensor upscale(const Tensor& latent, const std::array<Tensor, 3>& skips,
               const UpscalePath& path, const GpmConfig& cfg) {
  Tensor cur = latent;
  for (int j = 0; j < 3; ++j) {
    const Tensor& skip = skips[2 - j];
    if (skip.dims()[0] != cur.dims()[0] || skip.dims()[1] != cur.dims()[1]) {
      throw ConfigError("upscale: skip resolution does not match stage");
    }
    cur = concat_channels(cur, skip);
    cur = relu(conv2d_transpose(cur, path.kernels[j], path.biases[j],
                                cfg.down_stages[2 - j].stride, cfg.padding));
  }
  Tensor logits =
      conv2d(cur, path.head_kernel, path.head_bias, 1, Padding::kSame);
  Tensor probs = sigmoid(logits);
  return reshape(probs, {probs.dims()[0], probs.dims()[1]});
}

PredictionBundle gpm_forward(const std::vector<Tensor>& sequence,
                             const GpmParams& params, const GpmConfig& cfg,
                             bool training, std::mt19937_64& rng) {
  EncodeResult enc = encode(sequence, params, cfg, training, rng);
  std::vector<Tensor> latents =
      decode(enc.encoder_states, params, cfg, cfg.n_pred, training, rng);
  PredictionBundle out;
  out.y_stat = enc.y_stat;
  for (int i = 0; i < cfg.n_pred; ++i) {
    out.y_dyn.push_back(upscale(latents[i], enc.skips, params.dynamic_path, cfg));
    out.horizons_s.push_back(float(i + 1) * cfg.dt_pred);
  }
  return out;
}

}  // namespace gpm
