#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fdsdf/oracles.hpp"

namespace fdsdf::oracle {
namespace {

std::vector<AnalyticShape> distance_shapes() {
  return {Plane{Vec3(1, 2, 2).normalized(), 0.1}, Sphere{Vec3(0.1, 0, -0.1), 0.5}, Cylinder{0.5},
          Torus{1.0, 0.25}, Box{Vec3(0.5, 0.4, 0.3)}, RoundedBox{Vec3(0.6, 0.5, 0.4), 0.15}};
}

// Points within 0.3 x (feature radius) of the surface.
std::vector<Vec3> near_surface(const AnalyticShape& s, std::size_t n, std::uint64_t seed, double feature = 0.25) {
  Rng rng(seed);
  auto cloud = sample_surface(s, n, rng);
  std::uniform_real_distribution<double> off(-0.3 * feature, 0.3 * feature);
  std::vector<Vec3> xs;
  for (std::size_t i = 0; i < cloud.size(); ++i) xs.push_back(cloud.points[i] + off(rng) * cloud.normals[i]);
  return xs;
}

TEST(Oracles, SamplesLieOnTheSurfaceWithGradientNormals) {
  Rng rng(1);
  for (const auto& s : distance_shapes()) {
    auto c = sample_surface(s, 500, rng);
    ASSERT_EQ(c.size(), 500u);
    for (std::size_t i = 0; i < c.size(); ++i) {
      EXPECT_NEAR(sdf(s, c.points[i]), 0.0, 1e-12) << name(s);
      if (!std::holds_alternative<Box>(s)) {
        EXPECT_NEAR(c.normals[i].dot(gradient(s, c.points[i])), 1.0, 1e-9) << name(s);
      }
    }
  }
  EXPECT_THROW(sample_surface(Quadratic{}, 10, rng), ContractViolation);
}

TEST(Oracles, DerivativesAreMutuallyConsistent) {
  const double h = 1e-5;
  for (const auto& s : distance_shapes()) {
    if (std::holds_alternative<Box>(s)) continue;  // kinks along the feature lines
    for (const auto& x : near_surface(s, 100, 2, 0.15)) {
      const Vec3 g = gradient(s, x);
      const Mat3 hs = hessian(s, x);
      for (int k = 0; k < 3; ++k) {
        const Vec3 e = Vec3::Unit(k) * h;
        const double dfd = (sdf(s, x + e) - sdf(s, x - e)) / (2 * h);
        EXPECT_NEAR(dfd, g[k], 1e-7) << name(s);
        const Vec3 hfd = (gradient(s, x + e) - gradient(s, x - e)) / (2 * h);
        for (int r = 0; r < 3; ++r) EXPECT_NEAR(hfd[r], hs(r, k), 1e-5) << name(s);
      }
    }
  }
}

TEST(Oracles, ShapeOperatorClosedForms) {
  const Sphere sphere{Vec3::Zero(), 0.5};
  const Vec3 p(0, 0, 0.5);
  auto s = analytic_shape_operator(sphere, p, Vec3::UnitX(), Vec3::UnitY());
  EXPECT_NEAR(s.uu, 2.0, 1e-15);
  EXPECT_NEAR(s.vv, 2.0, 1e-15);
  EXPECT_NEAR(s.uv, 0.0, 1e-15);

  auto pl = analytic_shape_operator(Plane{}, Vec3(0.3, 0.1, 0), Vec3::UnitX(), Vec3::UnitY());
  EXPECT_EQ(pl.uu, 0.0);
  EXPECT_EQ(pl.uv, 0.0);
  EXPECT_EQ(pl.vv, 0.0);

  auto cy = analytic_shape_operator(Cylinder{0.5}, Vec3(0.5, 0, 0.2), Vec3::UnitZ(), Vec3::UnitY());
  EXPECT_NEAR(cy.uu, 0.0, 1e-15);
  EXPECT_NEAR(cy.vv, 2.0, 1e-15);
  EXPECT_NEAR(cy.uv, 0.0, 1e-15);
}

TEST(Oracles, GaussianCurvatureClosedForms) {
  EXPECT_DOUBLE_EQ(analytic_gaussian_curvature(Sphere{Vec3::Zero(), 0.5}, Vec3(0.5, 0, 0)), 4.0);
  EXPECT_DOUBLE_EQ(analytic_gaussian_curvature(Cylinder{0.5}, Vec3(0, 0.5, 0.3)), 0.0);
  EXPECT_NEAR(analytic_gaussian_curvature(Torus{1.0, 0.25}, Vec3(1.25, 0, 0)), 3.2, 1e-14);
}

TEST(Oracles, BorderedHessianClosedForms) {
  EXPECT_NEAR(bordered_hessian_curvature(Sphere{Vec3::Zero(), 0.5}, Vec3(0, 0.5, 0)), 4.0, 1e-12);
  EXPECT_EQ(bordered_hessian_curvature(Plane{}, Vec3(0.2, 0.2, 0)), 0.0);
  EXPECT_NEAR(bordered_hessian_curvature(Torus{1.0, 0.25}, Vec3(1.25, 0, 0)), 3.2, 1e-9);
}

TEST(Oracles, TwoCurvatureDefinitionsAgreeOnSurface) {
  Rng rng(3);
  for (const auto& s : distance_shapes()) {
    auto c = sample_surface(s, 300, rng);
    for (const auto& x : c.points) {
      if (std::holds_alternative<Box>(s)) continue;  // sharp edges have no curvature
      EXPECT_NEAR(bordered_hessian_curvature(s, x), analytic_gaussian_curvature(s, x), 1e-9) << name(s);
    }
  }
  Quadratic q;
  q.a = Eigen::Vector3d(1.0, 2.0, -0.5).asDiagonal();
  q.b = Vec3(0.1, -0.2, 0.3);
  for (const auto& x : {Vec3(0.3, 0.1, 0.2), Vec3(-0.4, 0.5, 0.1)})
    EXPECT_NEAR(bordered_hessian_curvature(q, x), analytic_gaussian_curvature(q, x), 1e-9);
}

TEST(Oracles, MedialAxisIsGuarded) {
  EXPECT_THROW(analytic_gaussian_curvature(Sphere{}, Vec3::Zero()), MedialAxisError);
  EXPECT_THROW(analytic_shape_operator(Cylinder{0.5}, Vec3(0, 0, 0.3), Vec3::UnitX(), Vec3::UnitY()),
               MedialAxisError);
  EXPECT_THROW(bordered_hessian_curvature(Quadratic{}, Vec3::Zero()), DegenerateGradient);
}

}  // namespace
}  // namespace fdsdf::oracle
