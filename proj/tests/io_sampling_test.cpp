#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "fdsdf/io.hpp"
#include "fdsdf/oracles.hpp"
#include "fdsdf/sampling.hpp"

namespace fdsdf {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("fdsdf_io_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path file(const std::string& name, const std::string& body = "") {
    const auto p = dir_ / name;
    if (!body.empty()) std::ofstream(p) << body;
    return p;
  }
  fs::path dir_;
};

using Io = TempDir;

TEST_F(Io, XyzThreePoints) {
  auto c = load_cloud(file("a.xyz", "0 0 0\n1 0 0\n0 1 0\n"));
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c.points[1], Vec3(1, 0, 0));
  EXPECT_FALSE(c.has_normals());
  auto n = load_cloud(file("n.xyz", "# comment\n0 0 0 0 0 1\n\n1 0 0 0 0 1\n"));
  EXPECT_TRUE(n.has_normals());
}

TEST_F(Io, NanCoordinateNamesTheLine) {
  try {
    load_cloud(file("bad.xyz", "0 0 0\n1 0 0\n0 nan 0\n"));
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  try {
    load_cloud(file("bad.ply", "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
                               "property float z\nend_header\n0 0 0\n1 nan 0\n"));
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 9u);
  }
}

TEST_F(Io, MalformedInputs) {
  EXPECT_THROW(load_cloud(file("c.xyz", "0 0\n")), ParseError);
  EXPECT_THROW(load_cloud(file("d.xyz", "0 0 x\n")), ParseError);
  EXPECT_THROW(load_cloud(file("e.xyz", "# nothing\n")), ParseError);
  EXPECT_THROW(load_cloud(file("f.obj", "v 0 0 0\nf 1 2 3\n")), ParseError);
  EXPECT_THROW(load_cloud(file("g.ply", "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nend_header\n1\n")),
               ParseError);
  EXPECT_THROW(load_cloud(dir_ / "missing.xyz"), ParseError);
  EXPECT_THROW(load_cloud(file("h.stl", "solid")), ParseError);
}

TEST_F(Io, PlyAsciiAndBinaryLoadIdentically) {
  Rng rng(1);
  auto cloud = oracle::sample_surface(oracle::Sphere{Vec3(0.1, 0.2, 0.3), 0.7}, 300, rng);
  write_cloud(dir_ / "a.ply", cloud, FileFormat::Ply, false);
  write_cloud(dir_ / "b.ply", cloud, FileFormat::Ply, true);
  write_cloud(dir_ / "c.xyz", cloud);
  const auto a = load_cloud(dir_ / "a.ply"), b = load_cloud(dir_ / "b.ply"), c = load_cloud(dir_ / "c.xyz");
  ASSERT_EQ(a.size(), cloud.size());
  ASSERT_EQ(b.size(), cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    EXPECT_EQ(a.points[i], b.points[i]);
    EXPECT_EQ(a.points[i], cloud.points[i]);
    EXPECT_EQ(c.points[i], cloud.points[i]);
    EXPECT_EQ(a.normals[i], b.normals[i]);
  }
}

TEST_F(Io, BinaryPlyWithFloatAndFaces) {
  // float32 vertices and a uchar/uint face list, written by hand
  const auto p = dir_ / "t.ply";
  {
    std::ofstream out(p, std::ios::binary);
    out << "ply\nformat binary_little_endian 1.0\ncomment hand made\nelement vertex 3\nproperty float x\n"
           "property float y\nproperty float z\nproperty uchar red\nelement face 1\n"
           "property list uchar uint vertex_indices\nend_header\n";
    const float v[3][3] = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    for (auto& r : v) {
      out.write(reinterpret_cast<const char*>(r), sizeof r);
      out.put(static_cast<char>(200));
    }
    out.put(3);
    const std::uint32_t f[3] = {0, 1, 2};
    out.write(reinterpret_cast<const char*>(f), sizeof f);
  }
  auto m = load_mesh(p);
  ASSERT_EQ(m.vertices.size(), 3u);
  ASSERT_EQ(m.triangles.size(), 1u);
  EXPECT_EQ(m.vertices[1], Vec3(1, 0, 0));
  EXPECT_DOUBLE_EQ(m.area(), 0.5);
}

TEST_F(Io, MeshRoundTripObjAndPly) {
  TriangleMesh m{{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)}, {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}}};
  const std::vector<double> dist = {0.0, 0.1, 0.2, 0.3};
  write_mesh(dir_ / "m.obj", m);
  write_mesh(dir_ / "m.ply", m, &dist);
  for (const char* name : {"m.obj", "m.ply"}) {
    auto r = load_mesh(dir_ / name);
    EXPECT_EQ(r.vertices, m.vertices) << name;
    EXPECT_EQ(r.triangles, m.triangles) << name;
  }
  std::ifstream in(dir_ / "m.ply");
  std::string header((std::istreambuf_iterator<char>(in)), {});
  EXPECT_NE(header.find("property double distance"), std::string::npos);
  // quads are fanned into triangles; negative indices are relative
  auto q = load_mesh(file("q.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4 -3 -2 -1\n"));
  EXPECT_EQ(q.triangles.size(), 2u);
  EXPECT_DOUBLE_EQ(q.area(), 1.0);
}

TEST(Normalize, UnitCubeCorners) {
  PointCloud c;
  for (int i = 0; i < 8; ++i) c.points.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  auto n = normalize(c);
  const Bounds b = n.cloud.bbox();
  EXPECT_NEAR(b.extent().maxCoeff(), 1.8, 1e-15);
  EXPECT_NEAR(b.center().norm(), 0.0, 1e-15);
  EXPECT_TRUE(Bounds({Vec3::Constant(-0.9), Vec3::Constant(0.9)}).contains(b.min, 1e-15));
}

TEST(Normalize, RoundTripAspectAndIdempotence) {
  Rng rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PointCloud c;
  for (int i = 0; i < 1000; ++i) c.points.emplace_back(300 + 50 * u(rng), -20 + 10 * u(rng), 7 + 2 * u(rng));
  auto n = normalize(c);
  for (std::size_t i = 0; i < c.size(); ++i)
    EXPECT_LT((n.to_object(n.cloud.points[i]) - c.points[i]).norm(), 1e-9 * c.points[i].norm());
  const Vec3 e0 = c.bbox().extent(), e1 = n.cloud.bbox().extent();
  EXPECT_NEAR(e1.x() / e1.y(), e0.x() / e0.y(), 1e-9);
  auto twice = normalize(n.cloud);
  EXPECT_NEAR(twice.scale, 1.0, 1e-9);
  EXPECT_LT(twice.translate.norm(), 1e-9);
  PointCloud same{{Vec3(1, 1, 1), Vec3(1, 1, 1)}, {}};
  EXPECT_THROW(normalize(same), ContractViolation);
  EXPECT_THROW(normalize(PointCloud{}), ContractViolation);
}

NormalizedCloud sphere_cloud(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return normalize(oracle::sample_surface(oracle::Sphere{Vec3::Zero(), 0.5}, n, rng));
}

TEST(Batches, DistinctSurfaceIndicesWhenCloudIsLarge) {
  auto nc = sphere_cloud(30000, 3);
  Rng rng(4);
  auto b = sample_batches(nc, BatchConfig{}, rng);
  ASSERT_EQ(b.surface.size(), 20000u);
  std::set<std::array<double, 3>> distinct;
  for (const auto& p : b.surface) distinct.insert({p.x(), p.y(), p.z()});
  EXPECT_EQ(distinct.size(), 20000u);
}

TEST(Batches, WithReplacementWhenCloudIsSmall) {
  auto nc = sphere_cloud(1000, 5);
  Rng rng(6);
  BatchConfig cfg;
  cfg.surface = 5000;
  auto b = sample_batches(nc, cfg, rng);
  EXPECT_EQ(b.surface.size(), 5000u);
  EXPECT_EQ(b.shell.size(), 5000u);
}

TEST(Batches, OffSurfaceIsUniformInTheCube) {
  auto nc = sphere_cloud(100, 7);
  Rng rng(8);
  auto b = sample_batches(nc, BatchConfig{}, rng);
  Vec3 mean = Vec3::Zero();
  for (const auto& p : b.offsurface) {
    EXPECT_LE(p.cwiseAbs().maxCoeff(), 1.0);
    mean += p;
  }
  mean /= static_cast<double>(b.offsurface.size());
  // per-axis standard error is 1/sqrt(3 * 20000) ≈ 0.004
  for (int k = 0; k < 3; ++k) EXPECT_LT(std::abs(mean[k]), 0.02);
}

TEST(Batches, ShellNoise) {
  auto nc = sphere_cloud(2000, 9);
  BatchConfig cfg;
  cfg.surface = cfg.offsurface = cfg.shell = 2000;
  cfg.shell_sigma = 0.0;
  Rng rng(10);
  auto b = sample_batches(nc, cfg, rng);
  EXPECT_EQ(b.shell, b.surface);
  cfg.shell_sigma = 0.01;
  cfg.shell = 500;
  auto c = sample_batches(nc, cfg, rng);
  ASSERT_EQ(c.shell.size(), 500u);
  double var = 0.0;
  for (std::size_t i = 0; i < c.shell.size(); ++i) var += (c.shell[i] - c.surface[i]).squaredNorm();
  EXPECT_NEAR(std::sqrt(var / (3.0 * 500)), 0.01, 0.001);
}

TEST(Batches, DeterministicUnderSeed) {
  auto nc = sphere_cloud(3000, 11);
  Rng r1(12), r2(12);
  BatchConfig cfg;
  cfg.surface = cfg.offsurface = cfg.shell = 1000;
  auto a = sample_batches(nc, cfg, r1), b = sample_batches(nc, cfg, r2);
  EXPECT_EQ(a.surface, b.surface);
  EXPECT_EQ(a.offsurface, b.offsurface);
  EXPECT_EQ(a.shell, b.shell);
}

TEST(ResampleMesh, SingleTriangleBarycentric) {
  TriangleMesh m{{Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(0, 1, 1)}, {{0, 1, 2}}};
  Rng rng(13);
  auto c = resample_mesh_surface(m, 2000, rng);
  ASSERT_EQ(c.size(), 2000u);
  const Vec3 a = m.vertices[0], e1 = m.vertices[1] - a, e2 = m.vertices[2] - a;
  for (const auto& p : c.points) {
    // solve p = a + s e1 + t e2 in the least-squares sense
    Eigen::Matrix<double, 3, 2> A;
    A << e1, e2;
    const Eigen::Vector2d st = A.colPivHouseholderQr().solve(p - a);
    EXPECT_LT((a + A * st - p).norm(), 1e-12);
    EXPECT_GE(st[0], -1e-12);
    EXPECT_GE(st[1], -1e-12);
    EXPECT_LE(st[0] + st[1], 1 + 1e-12);
  }
  EXPECT_THROW(resample_mesh_surface(m, 0, rng), ContractViolation);
  TriangleMesh flat{{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)}, {{0, 1, 2}}};
  EXPECT_THROW(resample_mesh_surface(flat, 10, rng), ContractViolation);
}

TEST(ResampleMesh, AreaWeighted) {
  // areas 3 : 1
  TriangleMesh m{{Vec3(0, 0, 0), Vec3(3, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 5), Vec3(1, 0, 5), Vec3(0, 1, 5)},
                 {{0, 1, 2}, {3, 4, 5}}};
  Rng rng(14);
  auto c = resample_mesh_surface(m, 100000, rng);
  std::size_t low = 0;
  for (const auto& p : c.points) low += p.z() < 2.5;
  const double ratio = static_cast<double>(low) / static_cast<double>(c.size() - low);
  EXPECT_NEAR(ratio, 3.0, 0.15);
}

}  // namespace
}  // namespace fdsdf
