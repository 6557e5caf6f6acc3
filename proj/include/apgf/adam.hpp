#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "apgf/error.hpp"
#include "apgf/tensor.hpp"

namespace apgf {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-parameter moment estimates. Moments are laid out in the order the
// parameters are visited, so a state is tied to one parameter layout.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

// One bias-corrected Adam update over `params` using each tensor's grad.
// Parameters without requires_grad are skipped; a missing grad counts as zero.
inline void adam_step(const std::vector<Tensor*>& params, AdamState& state) {
  const AdamConfig& c = state.config;
  if (!(c.learning_rate > 0.0)) throw ValidationError("adam: learning_rate must be positive");
  if (state.first_moment.empty()) {
    for (const Tensor* p : params) {
      state.first_moment.emplace_back(p->size(), 0.0);
      state.second_moment.emplace_back(p->size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size())
    throw ValidationError("adam: state holds " + std::to_string(state.first_moment.size()) +
                          " moments for " + std::to_string(params.size()) + " parameters");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Tensor& p = *params[k];
    if (state.first_moment[k].size() != p.size())
      throw ValidationError("adam: moment shape mismatch for parameter " + std::to_string(k));
    if (p.requires_grad && !p.grad.empty() && p.grad.size() != p.size())
      throw ValidationError("adam: grad shape mismatch for parameter " + std::to_string(k));
    if (p.requires_grad) require_finite(p.grad, "adam gradient");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    if (!p.requires_grad) continue;
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad.empty() ? 0.0 : p.grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p.values[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace apgf
