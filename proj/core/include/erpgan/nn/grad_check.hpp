#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "erpgan/nn/layer.hpp"

namespace erpgan::nn {

struct GradCheckResult {
  /// max |analytic - central difference| / max(1, |central difference|)
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
  /// Entries whose probe kept crossing a kink (relu sign, pooling argmax,
  /// probability clamp) even after shrinking the step.
  std::size_t skipped = 0;
};

/// Compares reverse-mode gradients of `objective` (summed to a scalar) with
/// central differences, over every entry of `params`.
///
/// `objective` must be a deterministic function of the parameter values; reseed
/// any dropout stream inside it. When a +/- probe changes a branch decision
/// relative to the unperturbed evaluation the function is not differentiable
/// over the probe interval, so the step is divided by 10 (at most 3 times)
/// before the entry is skipped.
GradCheckResult grad_check(const std::function<Tensor()>& objective,
                           std::span<Parameter* const> params, double epsilon = 1e-5);

}  // namespace erpgan::nn
