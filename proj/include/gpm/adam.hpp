#ifndef GPM_ADAM_HPP_
#define GPM_ADAM_HPP_

#include <cstdint>
#include <vector>

#include "gpm/tensor.hpp"

namespace gpm {

struct AdamConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Standard ADAM with bias correction over a fixed set of registered
// parameters. step() consumes and zeroes the accumulated grads.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(const AdamConfig& cfg) : cfg_(cfg) {}

  // Parameter must be a grad-tracking leaf; hard error otherwise.
  void register_param(const Tensor& p);
  void register_params(const std::vector<Tensor>& ps);

  void step();
  std::int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  struct Slot {
    Tensor param;
    std::vector<float> m;
    std::vector<float> v;
  };
  AdamConfig cfg_;
  std::vector<Slot> slots_;
  std::int64_t t_ = 0;  // increments by exactly 1 per step
};

}  // namespace gpm

#endif  // GPM_ADAM_HPP_
