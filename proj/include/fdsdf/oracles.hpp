#pragma once

/**
 * @file oracles.hpp
 * @brief Closed-form signed distance fields with analytic derivatives.
 *
 * These are the ground truth for the finite-difference stencils: every shape
 * provides its SDF, gradient, Hessian and the Gaussian curvature of the level
 * set through a query point. Two independent routes to K are offered, the
 * closed form per shape and the bordered-Hessian determinant.
 */

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "cloud.hpp"
#include "error.hpp"
#include "frames.hpp"
#include "tape.hpp"
#include "types.hpp"

namespace fdsdf::oracle {

/// n·x - offset, n unit.
struct Plane {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
};

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.5;
};

/// Infinite cylinder around the z axis.
struct Cylinder {
  double radius = 0.5;
};

/// Torus around the z axis.
struct Torus {
  double major = 1.0;
  double minor = 0.25;
};

/// Exact box SDF, centered at the origin.
struct Box {
  Vec3 half = Vec3::Constant(0.5);
};

/// Box with edges and corners rounded by `radius`; outer half-extents `half`.
struct RoundedBox {
  Vec3 half = Vec3::Constant(0.5);
  double radius = 0.1;
};

/// x'Ax + b'x + c, A symmetric. Not a distance field.
struct Quadratic {
  Mat3 a = Mat3::Identity();
  Vec3 b = Vec3::Zero();
  double c = 0.0;
};

using AnalyticShape = std::variant<Plane, Sphere, Cylinder, Torus, Box, RoundedBox, Quadratic>;

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

inline std::string name(const AnalyticShape& s) {
  return std::visit(Overloaded{[](const Plane&) { return std::string("plane"); },
                               [](const Sphere&) { return std::string("sphere"); },
                               [](const Cylinder&) { return std::string("cylinder"); },
                               [](const Torus&) { return std::string("torus"); },
                               [](const Box&) { return std::string("box"); },
                               [](const RoundedBox&) { return std::string("rounded-box"); },
                               [](const Quadratic&) { return std::string("quadratic"); }},
                    s);
}

inline bool is_distance_field(const AnalyticShape& s) { return !std::holds_alternative<Quadratic>(s); }

namespace detail {

struct BoxParts {
  Vec3 sign;  // sign of each coordinate
  Vec3 q;     // |x| - half
  Vec3 m;     // max(q, 0)
  double outside;
};

inline BoxParts box_parts(const Vec3& x, const Vec3& half) {
  BoxParts r;
  for (int i = 0; i < 3; ++i) r.sign[i] = x[i] < 0.0 ? -1.0 : 1.0;
  r.q = x.cwiseAbs() - half;
  r.m = r.q.cwiseMax(0.0);
  r.outside = r.m.norm();
  return r;
}

inline double box_sdf(const Vec3& x, const Vec3& half) {
  const auto p = box_parts(x, half);
  return p.outside + std::min(p.q.maxCoeff(), 0.0);
}

inline Vec3 box_gradient(const Vec3& x, const Vec3& half) {
  const auto p = box_parts(x, half);
  if (p.outside > 0.0) return p.sign.cwiseProduct(p.m) / p.outside;
  int k = 0;
  p.q.maxCoeff(&k);
  Vec3 g = Vec3::Zero();
  g[k] = p.sign[k];
  return g;
}

inline Mat3 box_hessian(const Vec3& x, const Vec3& half) {
  const auto p = box_parts(x, half);
  Mat3 h = Mat3::Zero();
  if (p.outside <= 0.0) return h;
  const double d = p.outside;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (p.m[i] <= 0.0 || p.m[j] <= 0.0) continue;
      const double delta = i == j ? 1.0 : 0.0;
      h(i, j) = p.sign[i] * p.sign[j] * (delta - p.m[i] * p.m[j] / (d * d)) / d;
    }
  return h;
}

inline double box_level_curvature(const Vec3& x, const Vec3& half) {
  const auto p = box_parts(x, half);
  const int positive = static_cast<int>((p.m.array() > 0.0).count());
  return positive == 3 ? 1.0 / (p.outside * p.outside) : 0.0;
}

inline Vec3 inner_half(const RoundedBox& s) { return s.half - Vec3::Constant(s.radius); }

}  // namespace detail

inline double sdf(const AnalyticShape& shape, const Vec3& x) {
  return std::visit(
      Overloaded{
          [&](const Plane& s) { return s.normal.dot(x) - s.offset; },
          [&](const Sphere& s) { return (x - s.center).norm() - s.radius; },
          [&](const Cylinder& s) { return std::hypot(x.x(), x.y()) - s.radius; },
          [&](const Torus& s) { return std::hypot(std::hypot(x.x(), x.y()) - s.major, x.z()) - s.minor; },
          [&](const Box& s) { return detail::box_sdf(x, s.half); },
          [&](const RoundedBox& s) { return detail::box_sdf(x, detail::inner_half(s)) - s.radius; },
          [&](const Quadratic& s) { return x.dot(s.a * x) + s.b.dot(x) + s.c; }},
      shape);
}

inline Vec3 gradient(const AnalyticShape& shape, const Vec3& x) {
  return std::visit(
      Overloaded{[&](const Plane& s) -> Vec3 { return s.normal; },
                 [&](const Sphere& s) -> Vec3 {
                   const Vec3 d = x - s.center;
                   const double r = d.norm();
                   if (r == 0.0) throw MedialAxisError("sphere center");
                   return d / r;
                 },
                 [&](const Cylinder&) -> Vec3 {
                   const double r = std::hypot(x.x(), x.y());
                   if (r == 0.0) throw MedialAxisError("cylinder axis");
                   return Vec3(x.x() / r, x.y() / r, 0.0);
                 },
                 [&](const Torus& s) -> Vec3 {
                   const double rho = std::hypot(x.x(), x.y());
                   const double d = std::hypot(rho - s.major, x.z());
                   if (rho == 0.0 || d == 0.0) throw MedialAxisError("torus core or axis");
                   const double gr = (rho - s.major) / d;
                   return Vec3(gr * x.x() / rho, gr * x.y() / rho, x.z() / d);
                 },
                 [&](const Box& s) -> Vec3 { return detail::box_gradient(x, s.half); },
                 [&](const RoundedBox& s) -> Vec3 { return detail::box_gradient(x, detail::inner_half(s)); },
                 [&](const Quadratic& s) -> Vec3 { return 2.0 * s.a * x + s.b; }},
      shape);
}

inline Mat3 hessian(const AnalyticShape& shape, const Vec3& x) {
  return std::visit(
      Overloaded{[&](const Plane&) -> Mat3 { return Mat3::Zero(); },
                 [&](const Sphere& s) -> Mat3 {
                   const Vec3 d = x - s.center;
                   const double r = d.norm();
                   if (r == 0.0) throw MedialAxisError("sphere center");
                   const Vec3 n = d / r;
                   return (Mat3::Identity() - n * n.transpose()) / r;
                 },
                 [&](const Cylinder&) -> Mat3 {
                   const double r = std::hypot(x.x(), x.y());
                   if (r == 0.0) throw MedialAxisError("cylinder axis");
                   const Vec3 n(x.x() / r, x.y() / r, 0.0);
                   Mat3 p = Mat3::Zero();
                   p(0, 0) = p(1, 1) = 1.0;
                   return (p - n * n.transpose()) / r;
                 },
                 [&](const Torus& s) -> Mat3 {
                   // f = g(rho, z), g = hypot(rho - R, z) - r
                   const double rho = std::hypot(x.x(), x.y());
                   const double a = rho - s.major, z = x.z();
                   const double d = std::hypot(a, z);
                   if (rho == 0.0 || d == 0.0) throw MedialAxisError("torus core or axis");
                   const double d3 = d * d * d;
                   const double g_r = a / d, g_rr = z * z / d3, g_zz = a * a / d3, g_rz = -a * z / d3;
                   const Vec3 e(x.x() / rho, x.y() / rho, 0.0);
                   const Vec3 ez = Vec3::UnitZ();
                   Mat3 pxy = Mat3::Zero();
                   pxy(0, 0) = pxy(1, 1) = 1.0;
                   const Mat3 h_rho = (pxy - e * e.transpose()) / rho;
                   return g_rr * e * e.transpose() + g_rz * (e * ez.transpose() + ez * e.transpose()) +
                          g_zz * ez * ez.transpose() + g_r * h_rho;
                 },
                 [&](const Box& s) -> Mat3 { return detail::box_hessian(x, s.half); },
                 [&](const RoundedBox& s) -> Mat3 { return detail::box_hessian(x, detail::inner_half(s)); },
                 [&](const Quadratic& s) -> Mat3 { return 2.0 * s.a; }},
      shape);
}

/// Projections of the analytic Hessian onto a tangent frame.
struct ShapeOperator {
  double uu = 0.0, uv = 0.0, vv = 0.0;
  double determinant() const { return uu * vv - uv * uv; }
};

namespace detail {

inline void guard_medial_axis(const AnalyticShape& shape, const Vec3& g) {
  if (is_distance_field(shape) && std::abs(g.norm() - 1.0) > 0.1)
    throw MedialAxisError(name(shape) + ": gradient norm deviates from 1, point is near the medial axis");
}

}  // namespace detail

inline ShapeOperator analytic_shape_operator(const AnalyticShape& shape, const Vec3& x0, const Vec3& u,
                                             const Vec3& v) {
  detail::guard_medial_axis(shape, gradient(shape, x0));
  const Mat3 h = hessian(shape, x0);
  return {u.dot(h * u), u.dot(h * v), v.dot(h * v)};
}

inline ShapeOperator analytic_shape_operator(const AnalyticShape& shape, const Vec3& x0,
                                             const TangentFrame& frame) {
  return analytic_shape_operator(shape, x0, frame.u, frame.v);
}

/// Gaussian curvature of the level set through x0, from per-shape closed forms.
inline double analytic_gaussian_curvature(const AnalyticShape& shape, const Vec3& x0) {
  const Vec3 g = gradient(shape, x0);
  detail::guard_medial_axis(shape, g);
  return std::visit(
      Overloaded{[&](const Plane&) { return 0.0; },
                 [&](const Sphere& s) {
                   const double r = (x0 - s.center).norm();
                   return 1.0 / (r * r);
                 },
                 [&](const Cylinder&) { return 0.0; },
                 [&](const Torus& s) {
                   const double a = std::hypot(x0.x(), x0.y()) - s.major;
                   const double d = std::hypot(a, x0.z());
                   const double cos_theta = a / d;
                   return cos_theta / (d * (s.major + d * cos_theta));
                 },
                 [&](const Box& s) { return detail::box_level_curvature(x0, s.half); },
                 [&](const RoundedBox& s) { return detail::box_level_curvature(x0, detail::inner_half(s)); },
                 [&](const Quadratic& s) {
                   // det of the Hessian restricted to the tangent plane over |g|^2
                   const TangentFrame f = frame_from_angle(g, 0.0);
                   const Mat3 h = 2.0 * s.a;
                   const double uu = f.u.dot(h * f.u), uv = f.u.dot(h * f.v), vv = f.v.dot(h * f.v);
                   return (uu * vv - uv * uv) / g.squaredNorm();
                 }},
      shape);
}

/// K = -det([[H, g], [g', 0]]) / |g|^4.
inline double bordered_hessian_curvature(const AnalyticShape& shape, const Vec3& x0) {
  const Vec3 g = gradient(shape, x0);
  const double g2 = g.squaredNorm();
  if (!(g2 > 0.0)) throw DegenerateGradient("bordered_hessian_curvature: zero gradient");
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m.topLeftCorner<3, 3>() = hessian(shape, x0);
  m.block<3, 1>(0, 3) = g;
  m.block<1, 3>(3, 0) = g.transpose();
  return -m.determinant() / (g2 * g2);
}

/// Uniform samples on the zero level set, with outward unit normals.
/// Cylinder and plane are truncated to |z| <= extent and a square patch.
inline PointCloud sample_surface(const AnalyticShape& shape, std::size_t n, Rng& rng, double extent = 0.8);

namespace detail {

inline Vec3 random_unit(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec3 v;
  do v = Vec3(g(rng), g(rng), g(rng));
  while (v.squaredNorm() < 1e-12);
  return v.normalized();
}

inline void sample_rounded_box(const Vec3& outer, double rho, std::size_t n, Rng& rng, PointCloud& out) {
  const Vec3 b = outer - Vec3::Constant(rho);
  // Pieces: 6 faces, 12 edge quarter-cylinders, 8 corner octants.
  struct Piece {
    int kind;  // 0 face, 1 edge, 2 corner
    int axis;  // face normal axis, or edge axis
    Vec3 sign;
    double area;
  };
  std::vector<Piece> pieces;
  const double pi = std::numbers::pi;
  for (int a = 0; a < 3; ++a) {
    const int i = (a + 1) % 3, j = (a + 2) % 3;
    for (double s : {-1.0, 1.0}) {
      Vec3 sg = Vec3::Zero();
      sg[a] = s;
      pieces.push_back({0, a, sg, 4.0 * b[i] * b[j]});
    }
    for (double si : {-1.0, 1.0})
      for (double sj : {-1.0, 1.0}) {
        Vec3 sg = Vec3::Zero();
        sg[i] = si;
        sg[j] = sj;
        pieces.push_back({1, a, sg, 2.0 * b[a] * 0.5 * pi * rho});
      }
  }
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0})
      for (double sz : {-1.0, 1.0}) pieces.push_back({2, 0, Vec3(sx, sy, sz), 0.5 * pi * rho * rho});
  std::vector<double> w;
  for (const auto& p : pieces) w.push_back(p.area);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (std::size_t k = 0; k < n; ++k) {
    const Piece& pc = pieces[pick(rng)];
    Vec3 p, nrm;
    if (pc.kind == 0) {
      const int a = pc.axis, i = (a + 1) % 3, j = (a + 2) % 3;
      p[a] = pc.sign[a] * outer[a];
      p[i] = uni(rng) * b[i];
      p[j] = uni(rng) * b[j];
      nrm = pc.sign;
    } else if (pc.kind == 1) {
      const int a = pc.axis, i = (a + 1) % 3, j = (a + 2) % 3;
      const double phi = 0.25 * pi * (uni(rng) + 1.0);  // [0, π/2]
      nrm = Vec3::Zero();
      nrm[i] = pc.sign[i] * std::cos(phi);
      nrm[j] = pc.sign[j] * std::sin(phi);
      p = Vec3::Zero();
      p[a] = uni(rng) * b[a];
      p[i] = pc.sign[i] * b[i];
      p[j] = pc.sign[j] * b[j];
      p += rho * nrm;
    } else {
      nrm = random_unit(rng).cwiseAbs().cwiseProduct(pc.sign);
      p = b.cwiseProduct(pc.sign) + rho * nrm;
    }
    out.points.push_back(p);
    out.normals.push_back(nrm);
  }
}

}  // namespace detail

inline PointCloud sample_surface(const AnalyticShape& shape, std::size_t n, Rng& rng, double extent) {
  if (n == 0) throw ContractViolation("sample_surface: n must be > 0");
  PointCloud out;
  out.points.reserve(n);
  out.normals.reserve(n);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::visit(
      Overloaded{
          [&](const Plane& s) {
            const TangentFrame f = frame_from_angle(s.normal, 0.0);
            for (std::size_t k = 0; k < n; ++k) {
              out.points.push_back(s.offset * f.n + extent * (uni(rng) * f.u + uni(rng) * f.v));
              out.normals.push_back(f.n);
            }
          },
          [&](const Sphere& s) {
            for (std::size_t k = 0; k < n; ++k) {
              const Vec3 d = detail::random_unit(rng);
              out.points.push_back(s.center + s.radius * d);
              out.normals.push_back(d);
            }
          },
          [&](const Cylinder& s) {
            for (std::size_t k = 0; k < n; ++k) {
              const double t = angle(rng);
              const Vec3 d(std::cos(t), std::sin(t), 0.0);
              out.points.push_back(s.radius * d + Vec3(0, 0, extent * uni(rng)));
              out.normals.push_back(d);
            }
          },
          [&](const Torus& s) {
            // area element ∝ R + r cos θ; rejection on θ
            std::uniform_real_distribution<double> accept(0.0, s.major + s.minor);
            for (std::size_t k = 0; k < n; ++k) {
              double theta;
              do theta = angle(rng);
              while (accept(rng) > s.major + s.minor * std::cos(theta));
              const double phi = angle(rng);
              const Vec3 radial(std::cos(phi), std::sin(phi), 0.0);
              const Vec3 nrm = std::cos(theta) * radial + std::sin(theta) * Vec3::UnitZ();
              out.points.push_back(s.major * radial + s.minor * nrm);
              out.normals.push_back(nrm);
            }
          },
          [&](const Box& s) { detail::sample_rounded_box(s.half, 0.0, n, rng, out); },
          [&](const RoundedBox& s) { detail::sample_rounded_box(s.half, s.radius, n, rng, out); },
          [&](const Quadratic&) { throw ContractViolation("sample_surface: quadratic fields have no sampler"); }},
      shape);
  return out;
}

/// Exact field with the eval / eval_with_gradient surface used by the losses.
struct Field {
  AnalyticShape shape;

  double eval(const Vec3& x) const { return sdf(shape, x); }
  TangentTriple<double> eval_with_gradient(const Vec3& x) const {
    const Vec3 g = gradient(shape, x);
    return {sdf(shape, x), g.x(), g.y(), g.z()};
  }
};

}  // namespace fdsdf::oracle
