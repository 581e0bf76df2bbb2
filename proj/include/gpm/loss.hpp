#ifndef GPM_LOSS_HPP_
#define GPM_LOSS_HPP_

#include <string>
#include <vector>

#include "gpm/model.hpp"
#include "gpm/tensor.hpp"

namespace gpm {

// Scalar summary of one loss evaluation. The combined value always satisfies
// l_o == l_s + k_o * l_d (same float arithmetic as the differentiable graph).
struct LossReport {
  float l_o = 0.0f;
  float l_s = 0.0f;
  float l_d = 0.0f;
  std::vector<float> horizon_terms;  // per-horizon weighted MSE means

  // One training-log line: iter,L_o,L_s,L_d,<horizon terms...>
  std::string csv_row(int iter) const;
};

std::string loss_csv_header(int n_pred);

// Mean absolute difference over the raster (static occupancy regression).
// Differentiable in y_s; y_s_star is treated as a constant label.
Tensor static_loss(const Tensor& y_s, const Tensor& y_s_star);

// Per-cell balance weight: 1 + k_i * label. Static background keeps weight 1;
// fully dynamic cells weigh k_i + 1.
float cell_weight(float y_d_star_ci, float k_i);

// Weighted MSE averaged over horizons and cells:
//   (1/n)(1/(W*H)) sum_i sum_c (1 + k_i y*_d(c,i)) (y*_d(c,i) - y_d(c,i))^2
// `horizon_terms`, when given, receives each horizon's mean (report values).
Tensor dynamic_loss(const std::vector<Tensor>& y_d,
                    const std::vector<Tensor>& y_d_star, float k_i,
                    std::vector<float>* horizon_terms = nullptr);

struct OverallLoss {
  Tensor total;  // scalar, differentiable: static + k_o * dynamic
  LossReport report;
};

OverallLoss overall_loss(const PredictionBundle& bundle,
                         const Tensor& y_s_star,
                         const std::vector<Tensor>& y_d_star, float k_o,
                         float k_i);

}  // namespace gpm

#endif  // GPM_LOSS_HPP_
