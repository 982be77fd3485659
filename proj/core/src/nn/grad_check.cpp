#include "erpgan/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "erpgan/error.hpp"
#include "erpgan/nn/ops.hpp"
#include "erpgan/nn/optim.hpp"

namespace erpgan::nn {

namespace {

struct Probe {
  double value;
  std::uint64_t digest;
};

Probe evaluate(const std::function<Tensor()>& objective) {
  NoGradGuard guard;
  branch_tracking::reset();
  Tensor out = objective();
  double total = 0.0;
  for (double v : out.data()) total += v;
  return {total, branch_tracking::digest()};
}

class TrackingScope {
 public:
  TrackingScope() : previous_(branch_tracking::enabled()) { branch_tracking::set_enabled(true); }
  ~TrackingScope() { branch_tracking::set_enabled(previous_); }

 private:
  bool previous_;
};

}  // namespace

GradCheckResult grad_check(const std::function<Tensor()>& objective,
                           std::span<Parameter* const> params, double epsilon) {
  if (!(epsilon > 0.0)) throw DomainError("grad_check: epsilon must be positive");
  TrackingScope tracking;

  zero_grad(params);
  branch_tracking::reset();
  Tensor out = objective();
  const std::uint64_t base_digest = branch_tracking::digest();
  Tensor total = out.size() == 1 ? out : ops::sum(out);
  total.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) {
    analytic.emplace_back(p->value.grad().begin(), p->value.grad().end());
  }

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi]->value.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      double step = epsilon;
      bool ok = false;
      double numeric = 0.0;
      for (int attempt = 0; attempt < 4 && !ok; ++attempt, step /= 10.0) {
        values[i] = original + step;
        const Probe plus = evaluate(objective);
        values[i] = original - step;
        const Probe minus = evaluate(objective);
        values[i] = original;
        if (plus.digest == base_digest && minus.digest == base_digest) {
          numeric = (plus.value - minus.value) / (2.0 * step);
          ok = true;
        }
      }
      if (!ok) {
        ++result.skipped;
        continue;
      }
      const double err = std::abs(analytic[pi][i] - numeric) / std::max(1.0, std::abs(numeric));
      ++result.checked;
      if (err > result.max_relative_error || !std::isfinite(err)) {
        result.max_relative_error = err;
        result.worst_parameter = params[pi]->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  zero_grad(params);
  return result;
}

}  // namespace erpgan::nn
