#include "gpm/domain.hpp"

#include <string>

#include "gpm/errors.hpp"

namespace gpm {

float occupancy_probability(float m_occ, float m_free) {
  if (m_occ < 0.0f || m_occ > 1.0f || m_free < 0.0f || m_free > 1.0f ||
      m_occ + m_free > 1.0f + 1e-6f) {
    throw DataError("occupancy_probability: invalid masses m_occ=" +
                    std::to_string(m_occ) + " m_free=" + std::to_string(m_free));
  }
  return m_occ + 0.5f * (1.0f - m_occ - m_free);
}

Tensor to_input_tensor(const DogmaFrame& frame, int channels) {
  if (channels != 2 && channels != 4) {
    throw ConfigError("input tensor channels must be 2 or 4");
  }
  const size_t n = size_t(frame.height) * frame.width;
  if (frame.m_occ.size() != n || frame.m_free.size() != n ||
      frame.v_e.size() != n || frame.v_n.size() != n) {
    throw DataError("to_input_tensor: plane sizes do not match frame dims");
  }
  Tensor t = Tensor::zeros({frame.height, frame.width, channels});
  float* d = t.data().data();
  for (size_t i = 0; i < n; ++i) {
    d[i * channels + 0] = frame.m_occ[i];
    d[i * channels + 1] = frame.m_free[i];
    if (channels == 4) {
      d[i * channels + 2] = frame.v_e[i];
      d[i * channels + 3] = frame.v_n[i];
    }
  }
  return t;
}

OgtTensor dogma_to_ogt(const DogmaFrame& frame) {
  OgtTensor t;
  t.dims = {frame.height, frame.width, 4};
  const size_t n = size_t(frame.height) * frame.width;
  t.data.resize(n * 4);
  for (size_t i = 0; i < n; ++i) {
    t.data[i * 4 + 0] = frame.m_occ[i];
    t.data[i * 4 + 1] = frame.m_free[i];
    t.data[i * 4 + 2] = frame.v_e[i];
    t.data[i * 4 + 3] = frame.v_n[i];
  }
  return t;
}

DogmaFrame dogma_from_ogt(const OgtTensor& t) {
  if (t.dims.size() != 3 || t.dims[2] != 4) {
    throw DataError("dogma tensor must be rank-3 [H,W,4]");
  }
  DogmaFrame f;
  f.height = t.dims[0];
  f.width = t.dims[1];
  const size_t n = size_t(f.height) * f.width;
  f.m_occ.resize(n);
  f.m_free.resize(n);
  f.v_e.resize(n);
  f.v_n.resize(n);
  for (size_t i = 0; i < n; ++i) {
    f.m_occ[i] = t.data[i * 4 + 0];
    f.m_free[i] = t.data[i * 4 + 1];
    f.v_e[i] = t.data[i * 4 + 2];
    f.v_n[i] = t.data[i * 4 + 3];
  }
  return f;
}

}  // namespace gpm
