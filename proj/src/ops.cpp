#include "gpm/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <string>

#include "gpm/errors.hpp"

namespace gpm {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// Geometry of one conv: "input" is always the large raster side, "output"
// the strided-down side, also when driving a transposed convolution.
struct ConvGeom {
  int in_h, in_w, in_c;
  int k, stride;
  int out_h, out_w;
  int pad_top, pad_left;

  std::int64_t patch() const { return std::int64_t(k) * k * in_c; }
  std::int64_t rows() const { return std::int64_t(out_h) * out_w; }
};

void check_kernel_stride(int k, int stride) {
  if (k < 1) {
    throw ConfigError("conv kernel size must be positive, got " +
                      std::to_string(k));
  }
  if (stride < 1) {
    throw ConfigError("conv stride must be >= 1, got " + std::to_string(stride));
  }
}

ConvGeom conv_geometry(int in_h, int in_w, int in_c, int k, int stride,
                       Padding padding) {
  check_kernel_stride(k, stride);
  ConvGeom g{};
  g.in_h = in_h;
  g.in_w = in_w;
  g.in_c = in_c;
  g.k = k;
  g.stride = stride;
  if (padding == Padding::kSame) {
    g.out_h = (in_h + stride - 1) / stride;
    g.out_w = (in_w + stride - 1) / stride;
    int pad_h = std::max((g.out_h - 1) * stride + k - in_h, 0);
    int pad_w = std::max((g.out_w - 1) * stride + k - in_w, 0);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
  } else {
    if (in_h < k || in_w < k || (in_h - k) % stride != 0 ||
        (in_w - k) % stride != 0) {
      throw ConfigError("valid padding requires (size - k) divisible by stride; size " +
                        std::to_string(in_h) + "x" + std::to_string(in_w) +
                        ", k " + std::to_string(k) + ", stride " +
                        std::to_string(stride));
    }
    g.out_h = (in_h - k) / stride + 1;
    g.out_w = (in_w - k) / stride + 1;
    g.pad_top = 0;
    g.pad_left = 0;
  }
  return g;
}

// cols layout: row (oy*out_w+ox), column ((ky*k+kx)*in_c + ci) — matches the
// row-major flattening of a [k,k,in_c,out_c] kernel into [k*k*in_c, out_c].
void im2col(const float* x, const ConvGeom& g, float* cols) {
  const std::int64_t patch = g.patch();
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      float* row = cols + (std::int64_t(oy) * g.out_w + ox) * patch;
      for (int ky = 0; ky < g.k; ++ky) {
        const int iy = oy * g.stride - g.pad_top + ky;
        for (int kx = 0; kx < g.k; ++kx) {
          const int ix = ox * g.stride - g.pad_left + kx;
          float* dst = row + (std::int64_t(ky) * g.k + kx) * g.in_c;
          if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) {
            std::fill(dst, dst + g.in_c, 0.0f);
          } else {
            const float* src = x + (std::int64_t(iy) * g.in_w + ix) * g.in_c;
            std::copy(src, src + g.in_c, dst);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds a cols matrix back onto the raster.
void col2im_add(const float* cols, const ConvGeom& g, float* x) {
  const std::int64_t patch = g.patch();
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      const float* row = cols + (std::int64_t(oy) * g.out_w + ox) * patch;
      for (int ky = 0; ky < g.k; ++ky) {
        const int iy = oy * g.stride - g.pad_top + ky;
        if (iy < 0 || iy >= g.in_h) continue;
        for (int kx = 0; kx < g.k; ++kx) {
          const int ix = ox * g.stride - g.pad_left + kx;
          if (ix < 0 || ix >= g.in_w) continue;
          const float* src = row + (std::int64_t(ky) * g.k + kx) * g.in_c;
          float* dst = x + (std::int64_t(iy) * g.in_w + ix) * g.in_c;
          for (int c = 0; c < g.in_c; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void check_same_dims(const Tensor& a, const Tensor& b, const char* op) {
  require(a.dims() == b.dims(), std::string(op) + ": operand dims differ");
}

Tensor pointwise_unary(const Tensor& x, float (*fwd)(float),
                       float (*dy_dx)(float x, float y)) {
  Tensor out = make_op_output(x.dims(), {x});
  const std::int64_t n = x.size();
  const float* xv = x.data().data();
  float* yv = out.data().data();
  for (std::int64_t i = 0; i < n; ++i) yv[i] = fwd(xv[i]);
  if (out.requires_grad()) {
    detail::TensorNode* on = out.node();
    Tensor xin = x;
    out.node()->backward_fn = [on, xin, dy_dx]() {
      const std::int64_t m = xin.size();
      const float* xd = xin.data().data();
      const float* yd = on->data.data();
      const float* gy = on->grad.data();
      float* gx = xin.node()->grad.data();
      for (std::int64_t i = 0; i < m; ++i) gx[i] += gy[i] * dy_dx(xd[i], yd[i]);
    };
  }
  return out;
}

}  // namespace

std::pair<int, int> conv_output_hw(int h, int w, int k, int stride,
                                   Padding padding) {
  ConvGeom g = conv_geometry(h, w, 1, k, stride, padding);
  return {g.out_h, g.out_w};
}

std::pair<int, int> conv_transpose_output_hw(int h, int w, int k, int stride,
                                             Padding padding) {
  check_kernel_stride(k, stride);
  if (padding == Padding::kSame) return {h * stride, w * stride};
  return {(h - 1) * stride + k, (w - 1) * stride + k};
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              int stride, Padding padding) {
  require(x.rank() == 3, "conv2d: input must be [H,W,C]");
  require(kernel.rank() == 4, "conv2d: kernel must be [k,k,Cin,Cout]");
  require(kernel.dims()[0] == kernel.dims()[1], "conv2d: kernel must be square");
  require(kernel.dims()[0] % 2 == 1, "conv2d: kernel size must be odd");
  require(kernel.dims()[2] == x.dims()[2],
          "conv2d: kernel Cin does not match input channels");
  const int k = kernel.dims()[0];
  const int cout = kernel.dims()[3];
  require(bias.rank() == 1 && bias.dims()[0] == cout,
          "conv2d: bias must be [Cout]");

  const ConvGeom g =
      conv_geometry(x.dims()[0], x.dims()[1], x.dims()[2], k, stride, padding);
  std::vector<float> cols(size_t(g.rows() * g.patch()));
  im2col(x.data().data(), g, cols.data());

  Tensor out = make_op_output({g.out_h, g.out_w, cout}, {x, kernel, bias});
  {
    CMapMat cols_m(cols.data(), g.rows(), g.patch());
    CMapMat ker_m(kernel.data().data(), g.patch(), cout);
    MapMat out_m(out.data().data(), g.rows(), cout);
    out_m.noalias() = cols_m * ker_m;
    out_m.rowwise() +=
        Eigen::Map<const Eigen::RowVectorXf>(bias.data().data(), cout);
  }

  if (out.requires_grad()) {
    detail::TensorNode* on = out.node();
    Tensor xin = x, ker = kernel, bi = bias;
    out.node()->backward_fn = [on, xin, ker, bi, g, cout]() {
      CMapMat dy_m(on->grad.data(), g.rows(), cout);
      if (bi.requires_grad()) {
        Eigen::Map<Eigen::RowVectorXf> db(bi.node()->grad.data(), cout);
        db += dy_m.colwise().sum();
      }
      if (ker.requires_grad()) {
        std::vector<float> cols2(size_t(g.rows() * g.patch()));
        im2col(xin.data().data(), g, cols2.data());
        CMapMat cols_m(cols2.data(), g.rows(), g.patch());
        MapMat dk(ker.node()->grad.data(), g.patch(), cout);
        dk.noalias() += cols_m.transpose() * dy_m;
      }
      if (xin.requires_grad()) {
        CMapMat ker_m(ker.data().data(), g.patch(), cout);
        RowMat dcols = dy_m * ker_m.transpose();
        col2im_add(dcols.data(), g, xin.node()->grad.data());
      }
    };
  }
  return out;
}

Tensor conv2d_transpose(const Tensor& x, const Tensor& kernel,
                        const Tensor& bias, int stride, Padding padding) {
  require(x.rank() == 3, "conv2d_transpose: input must be [H,W,C]");
  require(kernel.rank() == 4, "conv2d_transpose: kernel must be [k,k,Cout,Cin]");
  require(kernel.dims()[0] == kernel.dims()[1],
          "conv2d_transpose: kernel must be square");
  require(kernel.dims()[3] == x.dims()[2],
          "conv2d_transpose: kernel Cin does not match input channels");
  const int k = kernel.dims()[0];
  const int cout = kernel.dims()[2];
  const int cin = kernel.dims()[3];
  require(bias.rank() == 1 && bias.dims()[0] == cout,
          "conv2d_transpose: bias must be [Cout]");

  auto [out_h, out_w] =
      conv_transpose_output_hw(x.dims()[0], x.dims()[1], k, stride, padding);
  // The transpose scatters through the geometry of the conv it inverts: that
  // conv maps [out_h,out_w,cout] down to x's spatial dims.
  const ConvGeom g = conv_geometry(out_h, out_w, cout, k, stride, padding);
  assert(g.out_h == x.dims()[0] && g.out_w == x.dims()[1]);

  Tensor out = make_op_output({out_h, out_w, cout}, {x, kernel, bias});
  {
    CMapMat x_m(x.data().data(), g.rows(), cin);
    CMapMat ker_m(kernel.data().data(), g.patch(), cin);
    RowMat scatter = x_m * ker_m.transpose();  // [rows, k*k*cout]
    col2im_add(scatter.data(), g, out.data().data());
    MapMat out_m(out.data().data(), std::int64_t(out_h) * out_w, cout);
    out_m.rowwise() +=
        Eigen::Map<const Eigen::RowVectorXf>(bias.data().data(), cout);
  }

  if (out.requires_grad()) {
    detail::TensorNode* on = out.node();
    Tensor xin = x, ker = kernel, bi = bias;
    out.node()->backward_fn = [on, xin, ker, bi, g, cout, cin, out_h, out_w]() {
      if (bi.requires_grad()) {
        CMapMat dy_m(on->grad.data(), std::int64_t(out_h) * out_w, cout);
        Eigen::Map<Eigen::RowVectorXf> db(bi.node()->grad.data(), cout);
        db += dy_m.colwise().sum();
      }
      if (ker.requires_grad() || xin.requires_grad()) {
        std::vector<float> cols(size_t(g.rows() * g.patch()));
        im2col(on->grad.data(), g, cols.data());
        CMapMat cols_m(cols.data(), g.rows(), g.patch());
        if (ker.requires_grad()) {
          CMapMat x_m(xin.data().data(), g.rows(), cin);
          MapMat dk(ker.node()->grad.data(), g.patch(), cin);
          dk.noalias() += cols_m.transpose() * x_m;
        }
        if (xin.requires_grad()) {
          CMapMat ker_m(ker.data().data(), g.patch(), cin);
          MapMat dx(xin.node()->grad.data(), g.rows(), cin);
          dx.noalias() += cols_m * ker_m;
        }
      }
    };
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  return pointwise_unary(
      x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor tanh(const Tensor& x) {
  return pointwise_unary(x, [](float v) { return std::tanh(v); },
                         [](float, float y) { return 1.0f - y * y; });
}

Tensor relu(const Tensor& x) {
  // NaN passes through rather than flushing to 0, so numeric faults surface
  // at the loss check instead of being silently healed mid-network.
  return pointwise_unary(
      x, [](float v) { return v > 0.0f ? v : (v == v ? 0.0f : v); },
      [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor abs(const Tensor& x) {
  return pointwise_unary(
      x, [](float v) { return std::fabs(v); },
      [](float v, float) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); });
}

Tensor square(const Tensor& x) {
  return pointwise_unary(x, [](float v) { return v * v; },
                         [](float v, float) { return 2.0f * v; });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_dims(a, b, "add");
  Tensor out = make_op_output(a.dims(), {a, b});
  const std::int64_t n = a.size();
  for (std::int64_t i = 0; i < n; ++i)
    out.data()[i] = a.data()[i] + b.data()[i];
  if (out.requires_grad()) {
    detail::TensorNode* on = out.node();
    Tensor pa = a, pb = b;
    out.node()->backward_fn = [on, pa, pb]() {
      const std::int64_t m = std::int64_t(on->grad.size());
      if (pa.requires_grad()) {
        float* g = pa.node()->grad.data();
        for (std::int64_t i = 0; i < m; ++i) g[i] += on->grad[i];
      }
      if (pb.requires_grad()) {
        float* g = pb.node()->grad.data();
        for (std::int64_t i = 0; i < m; ++i) g[i] += on->grad[i];
      }
    };
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_dims(a, b, "sub");
  Tensor out = make_op_output(a.dims(), {a, b});
  const std::int64_t n = a.size();
  for (std::int64_t i = 0; i < n; ++i)
    out.data()[i] = a.data()[i] - b.data()[i];
  if (out.requires_grad()) {
    detail::TensorNode* on = out.node();
    Tensor pa = a, pb = b;
    out.node()->backward_fn = [on, pa, pb]() {
      const std::int64_t m = std::int64_t(on->grad.size());
      if (pa.requires_grad()) {
        float* g = pa.node()->grad.data();
        for (std::int64_t i = 0; i < m; ++i) g[i] += on->grad[i];
      }
      if (pb.requires_grad()) {
        float* g = pb.node()->grad.data();
        for (std::int64_t i = 0; i < m; ++i) g[i] -= on->grad[i];
      }
    };
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_dims(a, b, "mul");
  Tensor out = make_op_output(a.dims(), {a, b});
  const std::int64_t n = a.size();
  for (std::int64_t i = 0; i < n; ++i)
    out.data()[i] = a.data()[i] * b.data()[i];
  if (out.requires_grad()) {
    detail::TensorNode* on = out.node();
    Tensor pa = a, pb = b;
    out.node()->backward_fn = [on, pa, pb]() {
      const std::int64_t m = std::int64_t(on->grad.size());
      if (pa.requires_grad()) {
        float* g = pa.node()->grad.data();
        const float* bv = pb.data().data();
        for (std::int64_t i = 0; i < m; ++i) g[i] += on->grad[i] * bv[i];
      }
      if (pb.requires_grad()) {
        float* g = pb.node()->grad.data();
        const float* av = pa.data().data();
        for (std::int64_t i = 0; i < m; ++i) g[i] += on->grad[i] * av[i];
      }
    };
  }
  return out;
}

Tensor scale(const Tensor& x, float c) {
  Tensor out = make_op_output(x.dims(), {x});
  const std::int64_t n = x.size();
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * c;
  if (out.requires_grad()) {
    detail::TensorNode* on = out.node();
    Tensor xin = x;
    out.node()->backward_fn = [on, xin, c]() {
      float* g = xin.node()->grad.data();
      const std::int64_t m = std::int64_t(on->grad.size());
      for (std::int64_t i = 0; i < m; ++i) g[i] += on->grad[i] * c;
    };
  }
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out = make_op_output({1}, {x});
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  out.data()[0] = static_cast<float>(acc);
  if (out.requires_grad()) {
    detail::TensorNode* on = out.node();
    Tensor xin = x;
    out.node()->backward_fn = [on, xin]() {
      const float gy = on->grad[0];
      float* g = xin.node()->grad.data();
      const std::int64_t m = xin.size();
      for (std::int64_t i = 0; i < m; ++i) g[i] += gy;
    };
  }
  return out;
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0f / static_cast<float>(x.size()));
}

Tensor reshape(const Tensor& x, const std::vector<int>& dims) {
  Tensor out = make_op_output(dims, {x});
  require(out.size() == x.size(), "reshape: element count must be preserved");
  out.data() = x.data();
  if (out.requires_grad()) {
    detail::TensorNode* on = out.node();
    Tensor xin = x;
    out.node()->backward_fn = [on, xin]() {
      float* g = xin.node()->grad.data();
      const std::int64_t m = xin.size();
      for (std::int64_t i = 0; i < m; ++i) g[i] += on->grad[i];
    };
  }
  return out;
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const int rank = parts[0].rank();
  std::int64_t outer = 1;
  for (int d = 0; d + 1 < rank; ++d) outer *= parts[0].dims()[d];
  int total_c = 0;
  for (const Tensor& p : parts) {
    require(p.rank() == rank, "concat_channels: rank mismatch");
    for (int d = 0; d + 1 < rank; ++d) {
      require(p.dims()[d] == parts[0].dims()[d],
              "concat_channels: outer dims differ");
    }
    total_c += p.dims()[rank - 1];
  }
  std::vector<int> out_dims = parts[0].dims();
  out_dims[rank - 1] = total_c;

  Tensor out = make_op_output(out_dims, parts);
  float* ov = out.data().data();
  for (std::int64_t o = 0; o < outer; ++o) {
    std::int64_t off = 0;
    for (const Tensor& p : parts) {
      const int pc = p.dims()[rank - 1];
      const float* pv = p.data().data() + o * pc;
      std::copy(pv, pv + pc, ov + o * total_c + off);
      off += pc;
    }
  }

  if (out.requires_grad()) {
    detail::TensorNode* on = out.node();
    std::vector<Tensor> ps = parts;
    out.node()->backward_fn = [on, ps, outer, total_c, rank]() {
      const float* gy = on->grad.data();
      std::int64_t off = 0;
      for (const Tensor& p : ps) {
        const int pc = p.dims()[rank - 1];
        if (p.requires_grad()) {
          float* g = p.node()->grad.data();
          for (std::int64_t o = 0; o < outer; ++o) {
            const float* src = gy + o * total_c + off;
            float* dst = g + o * pc;
            for (int c = 0; c < pc; ++c) dst[c] += src[c];
          }
        }
        off += pc;
      }
    };
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  return concat_channels(std::vector<Tensor>{a, b});
}

Tensor slice_channels(const Tensor& x, int begin, int end) {
  const int rank = x.rank();
  const int c = x.dims()[rank - 1];
  require(0 <= begin && begin < end && end <= c,
          "slice_channels: range out of bounds");
  std::int64_t outer = 1;
  for (int d = 0; d + 1 < rank; ++d) outer *= x.dims()[d];
  const int sc = end - begin;
  std::vector<int> out_dims = x.dims();
  out_dims[rank - 1] = sc;

  Tensor out = make_op_output(out_dims, {x});
  for (std::int64_t o = 0; o < outer; ++o) {
    const float* src = x.data().data() + o * c + begin;
    std::copy(src, src + sc, out.data().data() + o * sc);
  }
  if (out.requires_grad()) {
    detail::TensorNode* on = out.node();
    Tensor xin = x;
    out.node()->backward_fn = [on, xin, outer, c, sc, begin]() {
      float* g = xin.node()->grad.data();
      const float* gy = on->grad.data();
      for (std::int64_t o = 0; o < outer; ++o) {
        float* dst = g + o * c + begin;
        const float* src = gy + o * sc;
        for (int i = 0; i < sc; ++i) dst[i] += src[i];
      }
    };
  }
  return out;
}

Tensor dropout(const Tensor& x, float rate, bool training,
               std::mt19937_64& rng) {
  if (rate < 0.0f || rate >= 1.0f) {
    throw ConfigError("dropout rate must be in [0,1), got " +
                      std::to_string(rate));
  }
  if (!training || rate == 0.0f) return x;

  const float keep_inv = 1.0f / (1.0f - rate);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> mask(size_t(x.size()));
  for (float& m : mask) m = (dist(rng) < rate) ? 0.0f : keep_inv;

  Tensor out = make_op_output(x.dims(), {x});
  const std::int64_t n = x.size();
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * mask[i];
  if (out.requires_grad()) {
    detail::TensorNode* on = out.node();
    Tensor xin = x;
    out.node()->backward_fn = [on, xin, mask = std::move(mask)]() {
      float* g = xin.node()->grad.data();
      const std::int64_t m = std::int64_t(on->grad.size());
      for (std::int64_t i = 0; i < m; ++i) g[i] += on->grad[i] * mask[i];
    };
  }
  return out;
}

}  // namespace gpm
