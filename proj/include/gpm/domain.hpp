#ifndef GPM_DOMAIN_HPP_
#define GPM_DOMAIN_HPP_

#include <vector>

#include "gpm/ogt.hpp"
#include "gpm/tensor.hpp"

namespace gpm {

// One bird's-eye sensor frame. Planes are row-major [H,W]. m_occ/m_free are
// Dempster-Shafer masses with m_occ + m_free <= 1 per cell; v_e/v_n are
// cell velocities normalized by the dataset's v_max so they lie in [-1,1],
// and are zero wherever m_occ is zero.
struct DogmaFrame {
  int height = 0;
  int width = 0;
  std::vector<float> m_occ, m_free, v_e, v_n;
};

// Ground truth rasters from unoccluded geometry: y_static covers immobile
// structure, y_dynamic the moving objects; both in [0,1], never both 1.
struct LabelFrame {
  int height = 0;
  int width = 0;
  std::vector<float> y_static, y_dynamic;
};

// P = m_occ + 0.5*(1 - m_occ - m_free); 0.5 denotes unobserved.
// Hard error when masses leave [0,1] or their sum exceeds 1.
float occupancy_probability(float m_occ, float m_free);

// Network input [H,W,C]; channel order m_occ, m_free, v_e, v_n. channels=2
// drops the velocity planes (ablation).
Tensor to_input_tensor(const DogmaFrame& frame, int channels);

// Interleaved rank-3 [H,W,4] tensor file form of a frame.
OgtTensor dogma_to_ogt(const DogmaFrame& frame);
DogmaFrame dogma_from_ogt(const OgtTensor& t);

}  // namespace gpm

#endif  // GPM_DOMAIN_HPP_
