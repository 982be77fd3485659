#include "erpgan/nn/optim.hpp"

#include <cmath>

#include "erpgan/error.hpp"

namespace erpgan::nn {

void adam_step(std::span<Parameter* const> params, const AdamConfig& config) {
  if (!(config.lr > 0.0) || !(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 >= 0.0 && config.beta2 < 1.0) || !(config.eps > 0.0)) {
    throw DomainError("adam: need lr > 0, 0 <= beta1, beta2 < 1 and eps > 0");
  }
  for (Parameter* p : params) {
    if (!p->value.requires_grad() || !p->value.has_grad()) {
      throw DomainError("adam: parameter '" + p->name + "' has no gradient");
    }
  }
  for (Parameter* p : params) {
    ++p->step;
    const double t = static_cast<double>(p->step);
    const double correct1 = 1.0 - std::pow(config.beta1, t);
    const double correct2 = 1.0 - std::pow(config.beta2, t);
    auto values = p->value.data();
    auto grad = p->value.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      p->m[i] = config.beta1 * p->m[i] + (1.0 - config.beta1) * g;
      p->v[i] = config.beta2 * p->v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = p->m[i] / correct1;
      const double v_hat = p->v[i] / correct2;
      values[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
      grad[i] = 0.0;
    }
  }
}

void zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) {
    if (p->value.requires_grad()) p->value.zero_grad();
  }
}

}  // namespace erpgan::nn
