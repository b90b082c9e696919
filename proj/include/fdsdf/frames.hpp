#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>

#include "error.hpp"
#include "types.hpp"

namespace fdsdf {

/// Orthonormal, right-handed (u, v, n) at a query point.
struct TangentFrame {
  Vec3 n, u, v;
};

/// Completes the unit normal of `gradient` to a tangent frame whose in-plane
/// angle is uniform on [0, 2π).
///
/// A Householder reflection maps ±ẑ onto n (the sign chosen so the reflector
/// is never close to zero), which sends the xy-plane onto the tangent plane.
/// The reflection flips handedness, so v is rebuilt as n × u.
inline TangentFrame frame_from_angle(const Vec3& gradient, double theta) {
  const double norm = gradient.norm();
  if (!(norm > kGradEpsilon)) throw DegenerateGradient("gradient norm below threshold");
  const Vec3 n = gradient / norm;
  const Vec3 a = n.z() > 0.0 ? Vec3(0, 0, -1) : Vec3(0, 0, 1);
  const Vec3 w = a - n;
  const Vec3 t(std::cos(theta), std::sin(theta), 0.0);
  Vec3 u = t - (2.0 * w.dot(t) / w.squaredNorm()) * w;
  u -= u.dot(n) * n;
  u.normalize();
  return {n, u, n.cross(u)};
}

inline TangentFrame complete_frame(const Vec3& gradient, Rng& rng) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  return frame_from_angle(gradient, angle(rng));
}

inline std::optional<TangentFrame> try_frame_from_angle(const Vec3& gradient, double theta) {
  if (!(gradient.norm() > kGradEpsilon) || !is_finite(gradient)) return std::nullopt;
  return frame_from_angle(gradient, theta);
}

/// Uniform in-plane angle in [0, 2π).
inline double draw_frame_angle(Rng& rng) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  return angle(rng);
}

/// Like complete_frame, but returns nullopt for a degenerate gradient. The
/// angle is drawn either way so the random stream does not depend on skips.
inline std::optional<TangentFrame> try_complete_frame(const Vec3& gradient, Rng& rng) {
  return try_frame_from_angle(gradient, draw_frame_angle(rng));
}

/// The nine points of the second-derivative stencils.
///   axis:    x+hu, x-hu, x+hv, x-hv
///   corners: x+hu+hv, x+hu-hv, x-hu+hv, x-hu-hv
struct StencilOffsets {
  Vec3 center;
  std::array<Vec3, 4> axis_points;
  std::array<Vec3, 4> corner_points;
  double h = 0.0;
  Vec3 u, v;
};

inline StencilOffsets make_stencil(const Vec3& x0, const TangentFrame& frame, double h) {
  if (!(h > 0.0)) throw ContractViolation("stencil step h must be > 0");
  const Vec3 hu = h * frame.u, hv = h * frame.v;
  StencilOffsets s;
  s.center = x0;
  s.axis_points = {x0 + hu, x0 - hu, x0 + hv, x0 - hv};
  s.corner_points = {x0 + hu + hv, x0 + hu - hv, x0 - hu + hv, x0 - hu - hv};
  s.h = h;
  s.u = frame.u;
  s.v = frame.v;
  return s;
}

}  // namespace fdsdf
