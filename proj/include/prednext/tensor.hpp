#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

namespace prednext {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);
std::string shape_str(const Shape& s);

// One node of the define-by-run graph. `backward` scatters this node's
// grad into the parents' grads; it is only set while grad mode is on and
// at least one parent requires grad.
struct TensorNode {
  std::vector<float> value;
  Shape shape;
  std::vector<float> grad;  // sized lazily by ensure_grad()
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward;

  void ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.f, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values,
                     bool requires_grad = false);
  static Tensor scalar(float v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }
  int64_t dim(int i) const { return node_->shape.at(static_cast<size_t>(i)); }
  int ndim() const { return static_cast<int>(node_->shape.size()); }

  float* data() { return node_->value.data(); }
  const float* data() const { return node_->value.data(); }
  std::vector<float>& values() { return node_->value; }
  const std::vector<float>& values() const { return node_->value; }
  float item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  std::vector<float>& grad();
  const std::vector<float>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  std::shared_ptr<TensorNode> node() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

// Runs reverse-mode accumulation from `loss` (a scalar), seeding with 1.
void backward(const Tensor& loss);

bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Creates a graph node. If grad mode is off or no parent requires grad,
// parents and backward are dropped and the node is a constant leaf.
Tensor make_op_node(Shape shape, std::vector<Tensor> parents,
                    std::function<void(TensorNode&)> backward_fn);

}  // namespace prednext
