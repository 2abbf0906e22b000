#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

namespace cascalign {

#ifdef CASCALIGN_FLOAT32
using real = float;
#else
using real = double;
#endif

class Tensor;

struct GradNode {
  std::vector<Tensor> parents;
  // Reads out.grad() and accumulates into the parents' grad buffers.
  std::function<void(const std::vector<Tensor>&, const Tensor&)> backward;
};

// When false, forward ops do not record graph nodes or allocate grad buffers.
bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Dense row-major tensor of rank 0..2 with reverse-mode gradient accumulation.
// Copies are handles onto shared storage: a parameter tensor held by an
// optimizer and the same tensor inside a recorded graph see one data and one
// grad buffer. Values are immutable once written by a forward op; only grad
// accumulates afterwards.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, real value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<real> data,
                          bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);
  // Internal: op output with a recorded node (node may be null in no-grad mode).
  static Tensor op_output(std::vector<int> shape, std::vector<real> data,
                          bool requires_grad, std::shared_ptr<GradNode> node);

  bool defined() const { return static_cast<bool>(data_); }
  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  // Rows/cols of a rank-2 tensor; a rank-1 tensor is treated as a single row.
  int rows() const;
  int cols() const;
  size_t size() const { return data_ ? data_->size() : 0; }

  const real* data() const { return data_->data(); }
  real* mutable_data() { return data_->data(); }
  const std::vector<real>& values() const { return *data_; }
  std::vector<real>& mutable_values() { return *data_; }
  real at(size_t i) const { return (*data_)[i]; }
  real at2(int r, int c) const {
    return (*data_)[static_cast<size_t>(r) * static_cast<size_t>(cols()) + static_cast<size_t>(c)];
  }
  real item() const;

  bool requires_grad() const { return requires_grad_; }
  bool has_grad() const { return static_cast<bool>(grad_); }
  // Grad buffers are shared and mutable by design; constness guards values only.
  real* grad_data() const { return grad_->data(); }
  const std::vector<real>& grad() const { return *grad_; }
  void zero_grad() const;

  const std::shared_ptr<GradNode>& node() const { return node_; }

  // Reverse-mode accumulation from this scalar through the recorded graph.
  void backward() const;

  bool all_finite() const;

 private:
  std::vector<int> shape_;
  std::shared_ptr<std::vector<real>> data_;
  std::shared_ptr<std::vector<real>> grad_;
  std::shared_ptr<GradNode> node_;
  bool requires_grad_ = false;
};

size_t shape_numel(const std::vector<int>& shape);

}  // namespace cascalign
