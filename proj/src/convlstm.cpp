#include "gpm/convlstm.hpp"

#include <cmath>

#include "gpm/errors.hpp"
#include "gpm/ops.hpp"

namespace gpm {

std::vector<std::pair<std::string, Tensor>> ConvLstmParams::named_tensors(
    const std::string& prefix) const {
  return {{prefix + ".wi", wi}, {prefix + ".wf", wf}, {prefix + ".wo", wo},
          {prefix + ".wg", wg}, {prefix + ".bi", bi}, {prefix + ".bf", bf},
          {prefix + ".bo", bo}, {prefix + ".bg", bg}};
}

std::vector<Tensor> ConvLstmParams::tensors() const {
  return {wi, wf, wo, wg, bi, bf, bo, bg};
}

ConvLstmParams make_convlstm_params(int k, int in_channels,
                                    int hidden_channels, std::mt19937_64& rng,
                                    bool trainable) {
  if (k < 1 || k % 2 == 0 || in_channels < 1 || hidden_channels < 1) {
    throw ConfigError("convlstm: kernel must be odd, channels positive");
  }
  ConvLstmParams p;
  p.k = k;
  p.in_channels = in_channels;
  p.hidden_channels = hidden_channels;
  const int cin_total = in_channels + hidden_channels;
  const float s = std::sqrt(1.0f / (float(k) * float(k) * float(cin_total)));
  const std::vector<int> kd{k, k, cin_total, hidden_channels};
  p.wi = Tensor::uniform(kd, -s, s, rng, trainable);
  p.wf = Tensor::uniform(kd, -s, s, rng, trainable);
  p.wo = Tensor::uniform(kd, -s, s, rng, trainable);
  p.wg = Tensor::uniform(kd, -s, s, rng, trainable);
  p.bi = Tensor::zeros({hidden_channels}, trainable);
  p.bf = Tensor::zeros({hidden_channels}, trainable);
  p.bf.fill(1.0f);
  p.bo = Tensor::zeros({hidden_channels}, trainable);
  p.bg = Tensor::zeros({hidden_channels}, trainable);
  return p;
}

ConvLstmState zero_state(int height, int width, int hidden_channels) {
  ConvLstmState s;
  s.h = Tensor::zeros({height, width, hidden_channels});
  s.c = Tensor::zeros({height, width, hidden_channels});
  return s;
}

ConvLstmState convlstm_step(const ConvLstmParams& params,
                            const ConvLstmState& state, const Tensor& x,
                            float dropout_rate, bool training,
                            std::mt19937_64& rng) {
  if (x.rank() != 3 || x.dims()[2] != params.in_channels) {
    throw ConfigError("convlstm_step: input channels do not match cell");
  }
  if (x.dims()[0] != state.h.dims()[0] || x.dims()[1] != state.h.dims()[1]) {
    throw ConfigError("convlstm_step: input spatial dims do not match state");
  }
  Tensor xt = dropout(x, dropout_rate, training, rng);
  Tensor xh = concat_channels(xt, state.h);
  Tensor i = sigmoid(conv2d(xh, params.wi, params.bi, 1, Padding::kSame));
  Tensor f = sigmoid(conv2d(xh, params.wf, params.bf, 1, Padding::kSame));
  Tensor o = sigmoid(conv2d(xh, params.wo, params.bo, 1, Padding::kSame));
  Tensor g = tanh(conv2d(xh, params.wg, params.bg, 1, Padding::kSame));
  ConvLstmState out;
  out.c = add(mul(f, state.c), mul(i, g));
  out.h = mul(o, tanh(out.c));
  return out;
}

std::pair<std::vector<ConvLstmState>, Tensor> stack_forward(
    const std::vector<ConvLstmParams>& layers,
    const std::vector<ConvLstmState>& states, const Tensor& x,
    float dropout_rate, bool training, std::mt19937_64& rng) {
  if (layers.empty()) throw ConfigError("stack_forward: no layers");
  if (layers.size() != states.size()) {
    throw ConfigError("stack_forward: layer/state count mismatch");
  }
  std::vector<ConvLstmState> next;
  next.reserve(layers.size());
  Tensor y = x;
  for (size_t l = 0; l < layers.size(); ++l) {
    // Each step applies dropout to its own input, which is exactly the set
    // of non-recurrent connections (frame input and inter-layer links).
    next.push_back(
        convlstm_step(layers[l], states[l], y, dropout_rate, training, rng));
    y = next.back().h;
  }
  return {std::move(next), y};
}

}  // namespace gpm
