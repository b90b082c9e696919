#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "fdsdf/mesh.hpp"
#include "fdsdf/metrics.hpp"
#include "fdsdf/oracles.hpp"
#include "fdsdf/sampling.hpp"

namespace fdsdf {
namespace {

auto batch_of(const oracle::AnalyticShape& s) {
  return [s](std::span<const Vec3> xs) {
    std::vector<double> v;
    v.reserve(xs.size());
    for (const auto& x : xs) v.push_back(oracle::sdf(s, x));
    return v;
  };
}

TEST(MarchingCubes, SphereVerticesAreaAndWinding) {
  const oracle::Sphere s{Vec3::Zero(), 0.5};
  const GridSpec grid{128, {Vec3::Constant(-1), Vec3::Constant(1)}};
  auto m = marching_cubes(batch_of(s), grid);
  const double diag = std::sqrt(3.0) * grid.spacing(0);
  for (const auto& v : m.vertices) EXPECT_LT(std::abs(v.norm() - 0.5), 2 * diag);
  const double area = 4 * std::numbers::pi * 0.25;
  EXPECT_NEAR(m.area(), area, 0.02 * area);
  EXPECT_GT(m.signed_volume(), 0.0);
  // closed genus-0 surface with shared vertices: V - E + F = 2, F = 2V - 4
  EXPECT_EQ(m.triangles.size(), 2 * m.vertices.size() - 4);
  for (std::size_t t = 0; t < m.triangles.size(); ++t) EXPECT_GT(m.face_area(t), 0.0);
  // vertex normals follow the gradient (outward)
  const auto n = vertex_normals(m);
  for (std::size_t i = 0; i < n.size(); ++i) EXPECT_GT(n[i].dot(m.vertices[i].normalized()), 0.99);
}

TEST(MarchingCubes, PlaneIsFlat) {
  const oracle::Plane p{Vec3(0, 0, 1), 0.1234};
  const GridSpec grid{32, {Vec3::Constant(-1), Vec3::Constant(1)}};
  auto m = marching_cubes(batch_of(p), grid);
  for (const auto& v : m.vertices) EXPECT_LT(std::abs(v.z() - 0.1234), grid.spacing(2));
  EXPECT_NEAR(m.area(), 4.0, 1e-9);
}

TEST(MarchingCubes, Errors) {
  auto constant = [](std::span<const Vec3> xs) { return std::vector<double>(xs.size(), 1.0); };
  EXPECT_THROW(marching_cubes(constant, GridSpec{16, {}}), EmptySurface);
  EXPECT_THROW(marching_cubes(batch_of(oracle::Sphere{}), GridSpec{7, {}}), ContractViolation);
}

TEST(MarchingCubes, ExactZeroValuesProduceNoDegenerateTriangles) {
  // the plane passes exactly through grid points
  auto m = marching_cubes(batch_of(oracle::Plane{Vec3(0, 0, 1), 0.0}), GridSpec{9, {}});
  for (std::size_t t = 0; t < m.triangles.size(); ++t) EXPECT_GT(m.face_area(t), 0.0);
  EXPECT_NEAR(m.area(), 4.0, 1e-9);
}

std::vector<Vec3> random_points(std::size_t n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<Vec3> v;
  for (std::size_t i = 0; i < n; ++i) v.emplace_back(g(rng), g(rng), g(rng));
  return v;
}

TEST(NearestNeighbors, TreeMatchesBruteForceExactly) {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    auto a = random_points(500, rng), b = random_points(500, rng, 0.3 + trial);
    // clustered and duplicated points as well
    for (int i = 0; i < 50; ++i) b.push_back(b[static_cast<std::size_t>(i)]);
    const auto tree = nearest_all(a, b, Search::Tree);
    const auto brute = nearest_all(a, b, Search::BruteForce);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(tree[i].distance, brute[i].distance);
      EXPECT_EQ(tree[i].index, brute[i].index);
    }
  }
  // query points far outside the indexed set
  auto a = random_points(200, rng, 50.0), b = random_points(300, rng, 0.1);
  const auto g = nearest_all(a, b, Search::Tree), r = nearest_all(a, b, Search::BruteForce);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(g[i].distance, r[i].distance);

  // lattice: queries at cell centres are equidistant from 8 points
  std::vector<Vec3> lattice, centres;
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y)
      for (int z = 0; z < 8; ++z) {
        lattice.emplace_back(x, y, z);
        if (x < 7 && y < 7 && z < 7) centres.emplace_back(x + 0.5, y + 0.5, z + 0.5);
      }
  std::shuffle(lattice.begin(), lattice.end(), rng);
  const auto lt = nearest_all(centres, lattice, Search::Tree), lb = nearest_all(centres, lattice, Search::BruteForce);
  for (std::size_t i = 0; i < centres.size(); ++i) {
    EXPECT_EQ(lt[i].index, lb[i].index);
    EXPECT_EQ(lt[i].distance, lb[i].distance);
  }
}

TEST(NearestNeighbors, HollowSetWithQueriesInsideAndOutside) {
  Rng rng(8);
  const auto shell = oracle::sample_surface(oracle::RoundedBox{Vec3(0.5, 0.4, 0.3), 0.1}, 20000, rng).points;
  std::uniform_real_distribution<double> uni(-1.5, 1.5);
  std::vector<Vec3> q;
  for (int i = 0; i < 300; ++i) q.emplace_back(uni(rng), uni(rng), uni(rng));
  for (int i = 0; i < 100; ++i) q.emplace_back(0.1 * uni(rng), 0.1 * uni(rng), 0.1 * uni(rng));  // deep inside
  const auto g = nearest_all(q, shell, Search::Tree), b = nearest_all(q, shell, Search::BruteForce);
  for (std::size_t i = 0; i < q.size(); ++i) {
    EXPECT_EQ(g[i].index, b[i].index);
    EXPECT_EQ(g[i].distance, b[i].distance);
  }
}

TEST(Metrics, AcceleratedEqualsBruteForce) {
  Rng rng(2);
  auto a = random_points(500, rng), b = random_points(500, rng, 0.7);
  EXPECT_EQ(chamfer(a, b, Search::Tree), chamfer(a, b, Search::BruteForce));
  EXPECT_EQ(hausdorff(a, b, Search::Tree), hausdorff(a, b, Search::BruteForce));
  EXPECT_EQ(f1_score(a, b, 0.1, Search::Tree), f1_score(a, b, 0.1, Search::BruteForce));
  EXPECT_EQ(chamfer(a, b, Search::Tree, 3), chamfer(a, b, Search::Tree, 1));
}

TEST(Metrics, TrivialValues) {
  std::vector<Vec3> a = {Vec3(0, 0, 0)}, b = {Vec3(0.3, 0.4, 0)};
  EXPECT_DOUBLE_EQ(chamfer(a, b), 0.5);
  EXPECT_DOUBLE_EQ(hausdorff(a, b), 0.5);
  Rng rng(3);
  auto c = random_points(100, rng);
  EXPECT_EQ(chamfer(c, c), 0.0);
  EXPECT_EQ(hausdorff(c, c), 0.0);
  EXPECT_DOUBLE_EQ(f1_score(c, c, 0.005), 100.0);
  std::vector<Vec3> far = c;
  for (auto& p : far) p += Vec3(100, 0, 0);
  EXPECT_EQ(f1_score(c, far, 0.005), 0.0);
  // half the predictions near gt, every gt point covered: P = 0.5, R = 1
  std::vector<Vec3> gt = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  std::vector<Vec3> pred = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(5, 0, 0), Vec3(6, 0, 0)};
  EXPECT_NEAR(f1_score(pred, gt, 0.01), 200.0 / 3.0, 1e-12);
  EXPECT_THROW(chamfer({}, a), ContractViolation);
  EXPECT_THROW(hausdorff(a, {}), ContractViolation);
  EXPECT_THROW(f1_score(a, b, 0.0), ContractViolation);
}

TEST(Metrics, SymmetryAndScaleProperties) {
  Rng rng(4);
  std::uniform_real_distribution<double> s(0.1, 10.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_points(300, rng), b = random_points(250, rng, 1.3);
    EXPECT_EQ(chamfer(a, b), chamfer(b, a));
    EXPECT_EQ(hausdorff(a, b), hausdorff(b, a));
    EXPECT_GE(hausdorff(a, b), chamfer(a, b));
    const double k = s(rng);
    auto as = a, bs = b;
    for (auto& p : as) p *= k;
    for (auto& p : bs) p *= k;
    EXPECT_NEAR(chamfer(as, bs), k * chamfer(a, b), 1e-12 * k * chamfer(a, b));
    EXPECT_NEAR(hausdorff(as, bs), k * hausdorff(a, b), 1e-12 * k * hausdorff(a, b));
    const double t = 0.2;
    EXPECT_NEAR(f1_score(as, bs, k * t), f1_score(a, b, t), 1e-9);
  }
}

TEST(Metrics, NormalConsistency) {
  Rng rng(5);
  auto gt = oracle::sample_surface(oracle::Sphere{Vec3::Zero(), 0.5}, 500, rng);
  EXPECT_NEAR(normal_consistency(gt, gt), 100.0, 1e-12);
  auto flipped = gt;
  for (auto& n : flipped.normals) n = -n;
  EXPECT_NEAR(normal_consistency(flipped, gt), 100.0, 1e-12);
  PointCloud ortho{{Vec3(0, 0, 0)}, {Vec3(1, 0, 0)}}, base{{Vec3(0, 0, 0)}, {Vec3(0, 1, 0)}};
  EXPECT_EQ(normal_consistency(ortho, base), 0.0);
  PointCloud zero{{Vec3(0, 0, 0)}, {Vec3(0, 0, 0)}};
  EXPECT_THROW(normal_consistency(zero, base), ContractViolation);
}

TEST(Metrics, SphereMeshAgainstAnalyticSamples) {
  const oracle::Sphere s{Vec3::Zero(), 0.5};
  auto m = marching_cubes(batch_of(s), GridSpec{128, {}});
  Rng rng(6);
  auto pred = resample_mesh_surface(m, 50000, rng);
  auto gt = oracle::sample_surface(s, 50000, rng);
  auto r = compute_metrics(pred, gt);
  EXPECT_GT(r.nc_x100, 99.0);
  EXPECT_LT(r.cd_x1000, 5.0);
  EXPECT_GE(r.hausdorff, r.cd_x1000 / 1e3);
  auto self = compute_metrics(pred, pred);
  EXPECT_EQ(self.cd_x1000, 0.0);
  EXPECT_EQ(self.f1_x100, 100.0);
}

}  // namespace
}  // namespace fdsdf
