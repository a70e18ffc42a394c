#include "prednext/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace prednext {

namespace {
thread_local bool g_grad_enabled = true;
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

void TensorNode::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.f);
}

Tensor::Tensor(Shape shape, float fill, bool requires_grad) {
  node_ = std::make_shared<TensorNode>();
  node_->shape = std::move(shape);
  node_->value.assign(static_cast<size_t>(shape_numel(node_->shape)), fill);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
  if (static_cast<int64_t>(values.size()) != shape_numel(shape))
    throw std::invalid_argument("Tensor::from: value count does not match shape " +
                                shape_str(shape));
  Tensor t;
  t.node_ = std::make_shared<TensorNode>();
  t.node_->shape = std::move(shape);
  t.node_->value = std::move(values);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(float v, bool requires_grad) {
  return Tensor::from({1}, {v}, requires_grad);
}

float Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("Tensor::item: tensor is not scalar");
  return node_->value[0];
}

std::vector<float>& Tensor::grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.f);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor make_op_node(Shape shape, std::vector<Tensor> parents,
                    std::function<void(TensorNode&)> backward_fn) {
  Tensor out(std::move(shape));
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents)
      if (p.defined() && p.requires_grad()) needs = true;
  }
  if (needs) {
    out.node()->requires_grad = true;
    for (auto& p : parents) out.node()->parents.push_back(p.node());
    out.node()->backward = std::move(backward_fn);
  }
  return out;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  auto root = loss.node();
  if (!root->requires_grad) return;

  // Topological order by DFS (iterative; graphs can be deep via BPTT).
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* parent = node->parents[idx++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = 1.f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace prednext
