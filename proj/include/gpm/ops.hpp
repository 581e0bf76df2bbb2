#ifndef GPM_OPS_HPP_
#define GPM_OPS_HPP_

#include <random>
#include <utility>
#include <vector>

#include "gpm/tensor.hpp"

namespace gpm {

// Zero-padding convention for strided convolutions.
//  kSame : H' = ceil(H / s), pad split evenly (extra pad at bottom/right).
//  kValid: H' = (H - k) / s + 1; requires (H - k) % s == 0 so that the
//          matching transposed convolution restores the shape exactly.
enum class Padding { kSame, kValid };

std::pair<int, int> conv_output_hw(int h, int w, int k, int stride,
                                   Padding padding);
std::pair<int, int> conv_transpose_output_hw(int h, int w, int k, int stride,
                                             Padding padding);

// Cross-correlation of x [H,W,Cin] with kernel [k,k,Cin,Cout] plus bias
// [Cout]; k odd, stride >= 1. Output [H',W',Cout].
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              int stride, Padding padding);

// Adjoint of conv2d: equals the input-gradient of conv2d with the same
// geometry. x [H,W,Cin], kernel [k,k,Cout,Cin], bias [Cout]; output
// [H*s, W*s, Cout] for kSame, [(H-1)*s+k, ...] for kValid.
Tensor conv2d_transpose(const Tensor& x, const Tensor& kernel,
                        const Tensor& bias, int stride,
                        Padding padding = Padding::kSame);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);

// Elementwise; dims must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float c);

Tensor sum(const Tensor& x);   // scalar [1]
Tensor mean(const Tensor& x);  // scalar [1]

Tensor reshape(const Tensor& x, const std::vector<int>& dims);

// Concatenation along the innermost dimension (channels for [H,W,C]
// rasters); all outer dims must match.
Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor concat_channels(const Tensor& a, const Tensor& b);

// Innermost-dimension slice [begin, end).
Tensor slice_channels(const Tensor& x, int begin, int end);

// Inverted dropout: training=true zeroes each element with probability
// `rate` and scales survivors by 1/(1-rate); training=false is identity.
Tensor dropout(const Tensor& x, float rate, bool training,
               std::mt19937_64& rng);

}  // namespace gpm

#endif  // GPM_OPS_HPP_
