#include "gpm/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace gpm {

void AdamOptimizer::register_param(const Tensor& p) {
  if (!p.defined() || !p.is_leaf() || !p.requires_grad()) {
    throw std::logic_error(
        "AdamOptimizer: parameters must be grad-tracking leaf tensors");
  }
  for (const Slot& s : slots_) {
    if (s.param.same_node(p)) {
      throw std::logic_error("AdamOptimizer: parameter registered twice");
    }
  }
  Slot slot;
  slot.param = p;
  slot.m.assign(p.data().size(), 0.0f);
  slot.v.assign(p.data().size(), 0.0f);
  slots_.push_back(std::move(slot));
}

void AdamOptimizer::register_params(const std::vector<Tensor>& ps) {
  for (const Tensor& p : ps) register_param(p);
}

void AdamOptimizer::step() {
  ++t_;
  // Fold both bias corrections into the step size; the eps placement below
  // (outside the v-hat sqrt) is the formulation from the original paper.
  const double bc1 = 1.0 - std::pow(double(cfg_.beta1), double(t_));
  const double bc2 = 1.0 - std::pow(double(cfg_.beta2), double(t_));
  const float alpha = float(double(cfg_.lr) * std::sqrt(bc2) / bc1);
  for (Slot& s : slots_) {
    float* p = s.param.data().data();
    float* g = s.param.grad().data();
    const size_t n = s.param.data().size();
    for (size_t i = 0; i < n; ++i) {
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0f - cfg_.beta1) * g[i];
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0f - cfg_.beta2) * g[i] * g[i];
      p[i] -= alpha * s.m[i] / (std::sqrt(s.v[i]) + cfg_.eps);
      g[i] = 0.0f;
    }
  }
}

}  // namespace gpm
