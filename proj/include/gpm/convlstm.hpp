#ifndef GPM_CONVLSTM_HPP_
#define GPM_CONVLSTM_HPP_

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gpm/tensor.hpp"

namespace gpm {

// Per-gate parameters of one ConvLSTM cell. Every gate convolves the
// channel-concatenation [x, h], so kernels are [k,k,Cin+Ch,Ch]. No peephole
// terms (config struct keeps the flag to document the choice; only the off
// setting is implemented).
struct ConvLstmParams {
  int k = 0;
  int in_channels = 0;
  int hidden_channels = 0;
  Tensor wi, wf, wo, wg;  // [k,k,Cin+Ch,Ch]
  Tensor bi, bf, bo, bg;  // [Ch]

  // Registration/serialization order is fixed; names match suffixes.
  std::vector<std::pair<std::string, Tensor>> named_tensors(
      const std::string& prefix) const;
  std::vector<Tensor> tensors() const;
};

// Kernels U[-s, s] with s = sqrt(1 / (k*k*(Cin+Ch))); forget bias 1.0 so
// early training does not forget state, all other biases 0.
ConvLstmParams make_convlstm_params(int k, int in_channels,
                                    int hidden_channels, std::mt19937_64& rng,
                                    bool trainable = true);

struct ConvLstmState {
  Tensor h;  // hidden state == cell output y
  Tensor c;
};

ConvLstmState zero_state(int height, int width, int hidden_channels);

// One cell update:
//   i = sigmoid(Wi * [x~, h] + bi)      f = sigmoid(Wf * [x~, h] + bf)
//   o = sigmoid(Wo * [x~, h] + bo)      g = tanh   (Wg * [x~, h] + bg)
//   c' = f . c + i . g                  h' = o . tanh(c')
// where x~ is dropout(x): the input is the only non-recurrent connection,
// h and c are never dropped. All convs stride-1 same-padded.
ConvLstmState convlstm_step(const ConvLstmParams& params,
                            const ConvLstmState& state, const Tensor& x,
                            float dropout_rate, bool training,
                            std::mt19937_64& rng);

// Feeds x through stacked cells bottom-up; layer i+1 consumes layer i's
// hidden output. Returns updated states and the top layer's output.
std::pair<std::vector<ConvLstmState>, Tensor> stack_forward(
    const std::vector<ConvLstmParams>& layers,
    const std::vector<ConvLstmState>& states, const Tensor& x,
    float dropout_rate, bool training, std::mt19937_64& rng);

}  // namespace gpm

#endif  // GPM_CONVLSTM_HPP_
