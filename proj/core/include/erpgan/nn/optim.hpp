#pragma once

#include <span>

#include "erpgan/nn/layer.hpp"

namespace erpgan::nn {

struct AdamConfig {
  double lr = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update on every parameter, then zeroes the
/// gradients. Throws DomainError if a parameter carries no gradient buffer
/// (e.g. it was frozen) or the hyperparameters are out of range.
void adam_step(std::span<Parameter* const> params, const AdamConfig& config);

/// Zeroes the gradients of `params`.
void zero_grad(std::span<Parameter* const> params);

}  // namespace erpgan::nn
