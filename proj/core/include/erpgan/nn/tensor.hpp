#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace erpgan::nn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tensor;

namespace detail {

struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass reaches this tensor
  bool requires_grad = false;
  std::shared_ptr<Node> creator;

  std::vector<double>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

/// One recorded operation. `backward` reads the output gradient and
/// accumulates into the gradients of those inputs that require them.
struct Node {
  std::vector<Tensor> inputs;
  std::function<void(TensorImpl& out)> backward;
};

}  // namespace detail

/// Dense row-major n-dimensional array of doubles with optional reverse-mode
/// gradient tracking. Copies share storage (like a handle); use clone() for a
/// deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }
  std::size_t extent(std::size_t axis) const { return impl_->shape.at(axis); }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  double& operator[](std::size_t i) { return impl_->data[i]; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<double> grad() { return impl_->grad; }
  std::span<const double> grad() const { return impl_->grad; }
  /// Sets the gradient to zeros (allocating it when needed).
  void zero_grad();
  /// Drops the gradient buffer entirely.
  void clear_grad() { impl_->grad.clear(); }

  /// Reverse-mode sweep from this scalar. Gradients accumulate into every
  /// reachable tensor that requires them.
  void backward() const;

  /// Same values, no history, no gradient tracking.
  Tensor detach() const;
  Tensor clone() const;
  bool is_leaf() const { return impl_->creator == nullptr; }

  detail::TensorImpl& impl() { return *impl_; }
  const detail::TensorImpl& impl() const { return *impl_; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// True while graph recording is enabled on this thread.
bool grad_enabled();

/// RAII guard disabling graph recording on the current thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Creates the result of an op. When recording is enabled and any input
/// requires a gradient, the result is attached to a new node whose
/// backward function is `backward`.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs,
                   std::function<void(detail::TensorImpl& out)> backward);

// Piecewise ops (relu, max pooling, clamping) mix every branch decision into a
// per-thread digest while tracking is on. The gradient checker uses it to tell
// whether a finite-difference probe crossed a kink.
namespace branch_tracking {
bool enabled();
void set_enabled(bool flag);
std::uint64_t digest();
void reset();
void mix(std::uint64_t value);
}  // namespace branch_tracking

}  // namespace erpgan::nn
