#include "gpm/tensor.hpp"

#include <cassert>
#include <stdexcept>
#include <unordered_set>

#include "gpm/errors.hpp"

namespace gpm {
namespace detail {

std::atomic<std::int64_t> TensorNode::live_count_{0};

TensorNode::~TensorNode() { --live_count_; }

std::int64_t TensorNode::live_count() { return live_count_.load(); }

namespace {

std::int64_t element_count(const std::vector<int>& dims) {
  if (dims.empty() || dims.size() > 4) {
    throw std::invalid_argument("tensor rank must be 1..4");
  }
  std::int64_t n = 1;
  for (int d : dims) {
    if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
    n *= d;
  }
  return n;
}

}  // namespace
}  // namespace detail

Tensor Tensor::zeros(const std::vector<int>& dims, bool requires_grad) {
  Tensor t;
  t.node_ = std::make_shared<detail::TensorNode>();
  std::int64_t n = detail::element_count(dims);
  t.node_->dims = dims;
  t.node_->data.assign(static_cast<size_t>(n), 0.0f);
  t.node_->requires_grad = requires_grad;
  if (requires_grad) t.node_->grad.assign(static_cast<size_t>(n), 0.0f);
  return t;
}

Tensor Tensor::full(const std::vector<int>& dims, float value) {
  Tensor t = zeros(dims, false);
  t.fill(value);
  return t;
}

Tensor Tensor::from_data(const std::vector<int>& dims,
                         std::vector<float> values, bool requires_grad) {
  std::int64_t n = detail::element_count(dims);
  if (static_cast<std::int64_t>(values.size()) != n) {
    throw std::invalid_argument("from_data: value count does not match dims");
  }
  Tensor t;
  t.node_ = std::make_shared<detail::TensorNode>();
  t.node_->dims = dims;
  t.node_->data = std::move(values);
  t.node_->requires_grad = requires_grad;
  if (requires_grad) t.node_->grad.assign(static_cast<size_t>(n), 0.0f);
  return t;
}

Tensor Tensor::scalar_value(float value) { return full({1}, value); }

Tensor Tensor::uniform(const std::vector<int>& dims, float lo, float hi,
                       std::mt19937_64& rng, bool requires_grad) {
  Tensor t = zeros(dims, requires_grad);
  std::uniform_real_distribution<float> dist(lo, hi);
  for (float& v : t.node_->data) v = dist(rng);
  return t;
}

const std::vector<int>& Tensor::dims() const {
  assert(node_);
  return node_->dims;
}

int Tensor::rank() const { return static_cast<int>(dims().size()); }

std::int64_t Tensor::size() const {
  assert(node_);
  return static_cast<std::int64_t>(node_->data.size());
}

bool Tensor::requires_grad() const {
  assert(node_);
  return node_->requires_grad;
}

void Tensor::set_requires_grad(bool on) {
  assert(node_);
  if (!node_->is_leaf()) {
    throw std::logic_error("set_requires_grad: only valid on leaf tensors");
  }
  node_->requires_grad = on;
  if (on) {
    node_->grad.assign(node_->data.size(), 0.0f);
  } else {
    node_->grad.clear();
  }
}

std::vector<float>& Tensor::data() {
  assert(node_);
  return node_->data;
}

const std::vector<float>& Tensor::data() const {
  assert(node_);
  return node_->data;
}

std::vector<float>& Tensor::grad() {
  assert(node_);
  if (!node_->requires_grad) {
    throw std::logic_error("grad(): tensor does not track gradients");
  }
  return node_->grad;
}

const std::vector<float>& Tensor::grad() const {
  assert(node_);
  if (!node_->requires_grad) {
    throw std::logic_error("grad(): tensor does not track gradients");
  }
  return node_->grad;
}

float Tensor::scalar() const {
  assert(node_);
  if (node_->data.size() != 1) {
    throw std::logic_error("scalar(): tensor has more than one element");
  }
  return node_->data[0];
}

void Tensor::fill(float value) {
  assert(node_);
  for (float& v : node_->data) v = value;
}

void Tensor::zero_grad() {
  assert(node_);
  if (node_->requires_grad) {
    node_->grad.assign(node_->data.size(), 0.0f);
  }
}

bool Tensor::is_leaf() const {
  assert(node_);
  return node_->is_leaf();
}

Tensor make_op_output(std::vector<int> dims, std::vector<Tensor> parents) {
  bool needs = false;
  for (const Tensor& p : parents) {
    assert(p.defined());
    if (p.requires_grad()) needs = true;
  }
  Tensor out = Tensor::zeros(dims, needs);
  if (needs) {
    out.node()->parents = std::move(parents);
  }
  // Without grad the op is pure eval: no parent links, tape frees eagerly.
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw std::logic_error("backward: undefined tensor");
  if (loss.size() != 1) throw std::logic_error("backward: loss must be scalar");
  if (!loss.requires_grad()) {
    throw std::logic_error("backward: loss does not track gradients");
  }

  // Iterative DFS topological order (deep graphs overflow recursion).
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> visited;
  std::vector<std::pair<detail::TensorNode*, size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::TensorNode* p = node->parents[next++].node();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior grads are scratch for this pass; leaf grads accumulate so a
  // caller can sum gradients over several backward calls before a step.
  for (detail::TensorNode* node : order) {
    if (!node->is_leaf()) node->grad.assign(node->data.size(), 0.0f);
  }
  loss.node()->grad[0] += 1.0f;  // leaf loss keeps accumulating across calls
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn();
  }
}

}  // namespace gpm
