#ifndef GPM_TENSOR_HPP_
#define GPM_TENSOR_HPP_

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

namespace gpm {

class Tensor;

namespace detail {

// One node of the define-by-run tape. The tape is rebuilt every forward
// pass; nodes free themselves when the last Tensor handle drops.
struct TensorNode {
  std::vector<int> dims;
  std::vector<float> data;
  std::vector<float> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  std::vector<Tensor> parents;
  std::function<void()> backward_fn;  // null for leaves

  TensorNode() { ++live_count_; }
  ~TensorNode();
  TensorNode(const TensorNode&) = delete;
  TensorNode& operator=(const TensorNode&) = delete;

  bool is_leaf() const { return !backward_fn; }

  // Instrumentation only: number of live tape nodes in the process.
  static std::int64_t live_count();

 private:
  static std::atomic<std::int64_t> live_count_;
};

}  // namespace detail

// Dense float32 tensor, rank 1..4, row-major, participating in reverse-mode
// differentiation. Tensor is a cheap handle; copies share the node.
// Rasters use [H,W] or [H,W,C] with the channel innermost; conv kernels use
// [k,k,Cin,Cout].
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const std::vector<int>& dims, bool requires_grad = false);
  static Tensor full(const std::vector<int>& dims, float value);
  static Tensor from_data(const std::vector<int>& dims,
                          std::vector<float> values,
                          bool requires_grad = false);
  static Tensor scalar_value(float value);
  // Elements sampled uniformly from [lo, hi].
  static Tensor uniform(const std::vector<int>& dims, float lo, float hi,
                        std::mt19937_64& rng, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& dims() const;
  int rank() const;
  std::int64_t size() const;
  bool requires_grad() const;

  // Leaves only; flipping grad tracking on an op output would orphan the tape.
  void set_requires_grad(bool on);

  std::vector<float>& data();
  const std::vector<float>& data() const;
  std::vector<float>& grad();
  const std::vector<float>& grad() const;

  float scalar() const;  // value of a size-1 tensor
  void fill(float value);
  void zero_grad();  // leaf grad reset

  bool is_leaf() const;
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  detail::TensorNode* node() const { return node_.get(); }

 private:
  friend Tensor make_op_output(std::vector<int> dims,
                               std::vector<Tensor> parents);
  std::shared_ptr<detail::TensorNode> node_;
};

// Populates grad on every requires_grad leaf reachable from `loss` with
// dLoss/dLeaf. Leaf grads accumulate across calls; use zero_grad to reset.
// Hard error if loss is not scalar.
void backward(const Tensor& loss);

// Internal: allocate an op output whose requires_grad is the OR of parents'.
Tensor make_op_output(std::vector<int> dims, std::vector<Tensor> parents);

}  // namespace gpm

#endif  // GPM_TENSOR_HPP_
