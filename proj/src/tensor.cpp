#include "cascalign/tensor.hpp"

#include <cmath>
#include <unordered_set>

#include "cascalign/errors.hpp"

namespace cascalign {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

size_t shape_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape");
    n *= static_cast<size_t>(d);
  }
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return from_data(std::move(shape), {}, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, real value, bool requires_grad) {
  const size_t n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<real>(n, value), requires_grad);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<real> data, bool requires_grad) {
  const size_t n = shape_numel(shape);
  if (data.empty()) data.assign(n, real(0));
  if (data.size() != n) throw DimensionError("data length does not match shape");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<real>>(std::move(data));
  t.requires_grad_ = requires_grad;
  if (requires_grad) t.grad_ = std::make_shared<std::vector<real>>(n, real(0));
  return t;
}

Tensor Tensor::scalar(real value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

Tensor Tensor::op_output(std::vector<int> shape, std::vector<real> data, bool requires_grad,
                         std::shared_ptr<GradNode> node) {
  Tensor t = from_data(std::move(shape), std::move(data), requires_grad);
  if (requires_grad) t.node_ = std::move(node);
  return t;
}

int Tensor::rows() const {
  if (rank() == 2) return shape_[0];
  if (rank() == 1) return 1;
  throw DimensionError("rows(): tensor is not a matrix or vector");
}

int Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  if (rank() == 1) return shape_[0];
  throw DimensionError("cols(): tensor is not a matrix or vector");
}

real Tensor::item() const {
  if (size() != 1) throw DimensionError("item(): tensor is not a scalar");
  return (*data_)[0];
}

void Tensor::zero_grad() const {
  if (grad_) std::fill(grad_->begin(), grad_->end(), real(0));
}

bool Tensor::all_finite() const {
  for (real v : *data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::backward() const {
  if (size() != 1) throw DimensionError("backward(): output must be a scalar");
  if (!requires_grad_) return;
  (*grad_)[0] = real(1);
  if (!node_) return;

  // Reverse topological order over the node graph.
  std::vector<const Tensor*> order;
  std::unordered_set<const GradNode*> visited;
  // Iterative DFS with explicit post-order to keep deep graphs off the call stack.
  struct Frame {
    const Tensor* t;
    size_t next_parent;
  };
  std::vector<Frame> frames;
  frames.push_back({this, 0});
  visited.insert(node_.get());
  while (!frames.empty()) {
    Frame& f = frames.back();
    const auto& node = f.t->node_;
    if (f.next_parent < node->parents.size()) {
      const Tensor& p = node->parents[f.next_parent++];
      if (p.node_ && !visited.count(p.node_.get())) {
        visited.insert(p.node_.get());
        frames.push_back({&p, 0});
      }
    } else {
      order.push_back(f.t);
      frames.pop_back();
    }
  }
  // order is post-order (parents first); walk it backwards.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Tensor* t = *it;
    if (t->node_->backward) t->node_->backward(t->node_->parents, *t);
  }
}

}  // namespace cascalign
