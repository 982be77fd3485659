#include "erpgan/nn/tensor.hpp"

#include <numeric>
#include <sstream>
#include <unordered_set>

#include "erpgan/error.hpp"

namespace erpgan::nn {

namespace {
thread_local bool t_grad_enabled = true;
thread_local bool t_branch_tracking = false;
thread_local std::uint64_t t_branch_digest = 0xcbf29ce484222325ULL;
}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ')';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
  impl_->data.assign(numel(shape), fill);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
  if (numel(shape) != values.size()) {
    throw ShapeError("tensor of shape " + to_string(shape) + " needs " +
                     std::to_string(numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<double>{value}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() needs a single-element tensor, got " + to_string(shape()));
  }
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool flag) { impl_->requires_grad = flag; }

void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

Tensor Tensor::detach() const {
  Tensor out;
  out.impl_ = std::make_shared<detail::TensorImpl>();
  out.impl_->shape = impl_->shape;
  out.impl_->data = impl_->data;
  return out;
}

Tensor Tensor::clone() const {
  Tensor out = detach();
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

void Tensor::backward() const {
  if (size() != 1) {
    throw ShapeError("backward() needs a scalar output, got shape " + to_string(shape()));
  }
  if (!impl_->requires_grad) return;

  // Post-order DFS gives a topological order; reverse it for the sweep.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<const detail::TensorImpl*> seen;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const auto* creator = node->creator.get();
    if (creator && next < creator->inputs.size()) {
      detail::TensorImpl* child = creator->inputs[next].impl_.get();
      ++next;
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  impl_->ensure_grad();
  impl_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* node = *it;
    if (node->creator && !node->grad.empty()) node->creator->backward(*node);
  }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   std::function<void(detail::TensorImpl& out)> backward) {
  Tensor out(std::move(shape), std::move(values));
  if (!t_grad_enabled) return out;
  bool any = false;
  for (const Tensor& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto node = std::make_shared<detail::Node>();
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  out.impl().creator = std::move(node);
  out.impl().requires_grad = true;
  return out;
}

namespace branch_tracking {
bool enabled() { return t_branch_tracking; }
void set_enabled(bool flag) { t_branch_tracking = flag; }
std::uint64_t digest() { return t_branch_digest; }
void reset() { t_branch_digest = 0xcbf29ce484222325ULL; }
void mix(std::uint64_t value) {
  t_branch_digest = (t_branch_digest ^ value) * 0x100000001b3ULL;
}
}  // namespace branch_tracking

}  // namespace erpgan::nn
