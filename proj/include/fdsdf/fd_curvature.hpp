#pragma once

/**
 * @file fd_curvature.hpp
 * @brief Second-order geometry of a field from forward evaluations only.
 *
 * Central differences in a tangent frame (u, v):
 *
 *   f_uu ≈ (f(x+hu) - 2 f(x) + f(x-hu)) / h²
 *   f_vv ≈ (f(x+hv) - 2 f(x) + f(x-hv)) / h²
 *   f_uv ≈ (f(x+hu+hv) - f(x+hu-hv) - f(x-hu+hv) + f(x-hu-hv)) / (4h²)
 *
 * Each has truncation error O(h²); on quadratic fields they are exact up to
 * round-off. From these,
 *
 *   D = f_uu f_vv - f_uv²          projected Hessian determinant
 *   K = D / ‖∇f‖⁴                  Gaussian curvature of the level set
 *
 * Everything is templated on the value type so the same code runs on plain
 * doubles (analytic checks) and on tape nodes (training).
 */

#include <cmath>
#include <type_traits>
#include <utility>

#include "error.hpp"
#include "frames.hpp"
#include "tape.hpp"
#include "types.hpp"

namespace fdsdf {

template <class T>
struct SecondForm {
  T fuu, fvv, fuv;
  double h = 0.0;
};

/// Evaluates `f` exactly nine times, center first, and forms the stencils.
template <class Evaluator>
auto second_form(Evaluator&& f, const StencilOffsets& s) {
  using T = std::decay_t<decltype(f(s.center))>;
  const T c = f(s.center);
  const T up = f(s.axis_points[0]);
  const T um = f(s.axis_points[1]);
  const T vp = f(s.axis_points[2]);
  const T vm = f(s.axis_points[3]);
  const T pp = f(s.corner_points[0]);
  const T pm = f(s.corner_points[1]);
  const T mp = f(s.corner_points[2]);
  const T mm = f(s.corner_points[3]);
  const double inv_h2 = 1.0 / (s.h * s.h);
  SecondForm<T> form{(up - 2.0 * c + um) * inv_h2, (vp - 2.0 * c + vm) * inv_h2,
                     ((pp - pm) - (mp - mm)) * (0.25 * inv_h2), s.h};
  return form;
}

template <class T>
T projected_determinant_fd(const SecondForm<T>& form) {
  return form.fuu * form.fvv - form.fuv * form.fuv;
}

/// Gaussian curvature with the denominator ‖∇f‖ replaced by 1, which is the
/// near-surface form used for training.
template <class T>
T gaussian_curvature_fd(const SecondForm<T>& form) {
  return projected_determinant_fd(form);
}

template <class T>
T gaussian_curvature_fd(const SecondForm<T>& form, const T& grad_norm) {
  if (!(value_of(grad_norm) > kGradEpsilon))
    throw DegenerateGradient("gaussian_curvature_fd: gradient norm below threshold");
  const T n2 = grad_norm * grad_norm;
  return projected_determinant_fd(form) / (n2 * n2);
}

}  // namespace fdsdf
