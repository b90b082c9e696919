#pragma once

// Empirical convergence study of the second-derivative stencils against the
// analytic shape operator of closed-form fields.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "fd_curvature.hpp"
#include "oracles.hpp"

namespace fdsdf {

struct ConvergenceRow {
  double h = 0.0;
  double err_uu = 0.0, err_uv = 0.0, err_vv = 0.0;
  double max_error() const { return std::max({err_uu, err_uv, err_vv}); }
};

struct ConvergenceReport {
  std::string shape;
  std::vector<ConvergenceRow> rows;
  double order = 0.0;   // least-squares slope of log(max error) vs log(h)
  bool exact = false;   // every error at round-off scale (quadratic fields)
  bool smooth = true;   // order is meaningful for this field

  bool passes(double lo = 1.5, double hi = 2.5) const { return exact || !smooth || (order >= lo && order <= hi); }
};

inline double fit_order(const std::vector<ConvergenceRow>& rows) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    const double x = std::log(r.h), y = std::log(std::max(r.max_error(), 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Worst-case stencil error over `points` (on or near the surface), one
/// fixed-angle frame per point, for each step in `steps`.
inline ConvergenceReport stencil_convergence(const oracle::AnalyticShape& shape, const std::vector<Vec3>& points,
                                             const std::vector<double>& steps) {
  ConvergenceReport rep;
  rep.shape = oracle::name(shape);
  rep.smooth = !std::holds_alternative<oracle::Box>(shape) && !std::holds_alternative<oracle::Plane>(shape);
  auto field = [&](const Vec3& x) { return oracle::sdf(shape, x); };
  bool all_roundoff = true;
  for (double h : steps) {
    ConvergenceRow row;
    row.h = h;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Vec3& x0 = points[i];
      const TangentFrame frame = frame_from_angle(oracle::gradient(shape, x0), 0.37 + 1.3 * static_cast<double>(i));
      const auto exact = oracle::analytic_shape_operator(shape, x0, frame);
      const auto form = second_form(field, make_stencil(x0, frame, h));
      row.err_uu = std::max(row.err_uu, std::abs(form.fuu - exact.uu));
      row.err_uv = std::max(row.err_uv, std::abs(form.fuv - exact.uv));
      row.err_vv = std::max(row.err_vv, std::abs(form.fvv - exact.vv));
    }
    if (row.max_error() > 1e-9 / (h * h)) all_roundoff = false;
    rep.rows.push_back(row);
  }
  rep.exact = all_roundoff;
  if (rep.exact) rep.smooth = false;
  rep.order = rep.exact ? 0.0 : fit_order(rep.rows);
  return rep;
}

}  // namespace fdsdf
