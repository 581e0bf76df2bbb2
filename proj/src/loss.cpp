#include "gpm/loss.hpp"

#include <cstdio>

#include "gpm/errors.hpp"
#include "gpm/ops.hpp"

namespace gpm {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.defined() || !b.defined() || a.dims() != b.dims()) {
    throw DataError(std::string(what) + ": raster shapes do not match");
  }
}

std::string format_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.8g", double(v));
  return buf;
}

}  // namespace

std::string LossReport::csv_row(int iter) const {
  std::string row = std::to_string(iter) + "," + format_float(l_o) + "," +
                    format_float(l_s) + "," + format_float(l_d);
  for (float h : horizon_terms) row += "," + format_float(h);
  return row;
}

std::string loss_csv_header(int n_pred) {
  std::string header = "iter,loss,static,dynamic";
  for (int i = 1; i <= n_pred; ++i) header += ",horizon" + std::to_string(i);
  return header;
}

Tensor static_loss(const Tensor& y_s, const Tensor& y_s_star) {
  require_same_shape(y_s, y_s_star, "static_loss");
  return mean(abs(sub(y_s_star, y_s)));
}

float cell_weight(float y_d_star_ci, float k_i) {
  return 1.0f + k_i * y_d_star_ci;
}

Tensor dynamic_loss(const std::vector<Tensor>& y_d,
                    const std::vector<Tensor>& y_d_star, float k_i,
                    std::vector<float>* horizon_terms) {
  if (y_d.empty() || y_d.size() != y_d_star.size()) {
    throw DataError("dynamic_loss: horizon counts do not match");
  }
  if (horizon_terms) horizon_terms->clear();
  Tensor acc;
  for (size_t i = 0; i < y_d.size(); ++i) {
    require_same_shape(y_d[i], y_d_star[i], "dynamic_loss");
    const std::vector<float>& star = y_d_star[i].data();
    std::vector<float> lam(star.size());
    for (size_t c = 0; c < star.size(); ++c) lam[c] = cell_weight(star[c], k_i);
    Tensor weights = Tensor::from_data(y_d[i].dims(), std::move(lam));
    Tensor term = mean(mul(weights, square(sub(y_d_star[i], y_d[i]))));
    if (horizon_terms) horizon_terms->push_back(term.scalar());
    acc = acc.defined() ? add(acc, term) : term;
  }
  return scale(acc, 1.0f / float(y_d.size()));
}

OverallLoss overall_loss(const PredictionBundle& bundle,
                         const Tensor& y_s_star,
                         const std::vector<Tensor>& y_d_star, float k_o,
                         float k_i) {
  OverallLoss out;
  Tensor l_s = static_loss(bundle.y_stat, y_s_star);
  Tensor l_d =
      dynamic_loss(bundle.y_dyn, y_d_star, k_i, &out.report.horizon_terms);
  out.total = add(l_s, scale(l_d, k_o));
  out.report.l_s = l_s.scalar();
  out.report.l_d = l_d.scalar();
  out.report.l_o = out.total.scalar();
  return out;
}

}  // namespace gpm
