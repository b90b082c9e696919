#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "error.hpp"

namespace fdsdf {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m, v;
  std::size_t step = 0;     // applied updates
  std::size_t skipped = 0;  // updates refused for non-finite gradients
};

/// Bias-corrected Adam update in place. A gradient with any non-finite entry
/// leaves parameters and moments untouched and returns false.
inline bool adam_step(std::span<double> params, std::span<const double> grads, AdamState& s, double lr) {
  if (params.size() != grads.size()) throw ContractViolation("adam: gradient size does not match parameters");
  if (!(lr > 0.0)) throw ContractViolation("adam: learning rate must be > 0");
  if (s.m.empty()) {
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
  }
  if (s.m.size() != params.size()) throw ContractViolation("adam: state size does not match parameters");
  for (double g : grads)
    if (!std::isfinite(g)) {
      ++s.skipped;
      return false;
    }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
    params[i] -= lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + s.eps);
  }
  return true;
}

}  // namespace fdsdf
