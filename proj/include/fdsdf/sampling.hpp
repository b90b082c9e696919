#pragma once

// Normalization of input clouds and per-iteration batch drawing.

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "batch.hpp"
#include "cloud.hpp"
#include "error.hpp"
#include "mesh.hpp"

namespace fdsdf {

/// Longest side of the normalized bounding box; leaves a 0.1 margin inside
/// the [-1, 1]³ sampling cube for stencils and shell noise.
inline constexpr double kNormalizedExtent = 1.8;

struct NormalizedCloud {
  PointCloud cloud;        // normalized coordinates
  double scale = 1.0;      // object = scale * normalized + translate
  Vec3 translate = Vec3::Zero();

  Vec3 to_object(const Vec3& p) const { return scale * p + translate; }
  Vec3 to_normalized(const Vec3& x) const { return (x - translate) / scale; }
};

inline NormalizedCloud normalize(const PointCloud& cloud) {
  if (cloud.empty()) throw ContractViolation("normalize: empty cloud");
  const Bounds b = cloud.bbox();
  const double longest = b.extent().maxCoeff();
  if (!(longest > 0.0)) throw ContractViolation("normalize: all points are identical");
  NormalizedCloud n;
  n.scale = longest / kNormalizedExtent;
  n.translate = b.center();
  n.cloud.points.reserve(cloud.size());
  for (const auto& p : cloud.points) n.cloud.points.push_back(n.to_normalized(p));
  n.cloud.normals = cloud.normals;
  return n;
}

struct BatchConfig {
  std::size_t surface = 20000;
  std::size_t offsurface = 20000;
  std::size_t shell = 20000;  // clamped to the surface batch size
  double shell_sigma = 1e-2;
};

/**
 * Surface points without replacement when the cloud is large enough (with
 * replacement otherwise), fresh uniform off-surface points in [-1, 1]³, and
 * shell points made by jittering the first `shell` surface points.
 */
inline TrainingBatch sample_batches(const NormalizedCloud& nc, const BatchConfig& cfg, Rng& rng) {
  const auto& pts = nc.cloud.points;
  if (pts.empty()) throw ContractViolation("sample_batches: empty cloud");
  if (cfg.surface == 0 || cfg.offsurface == 0) throw ContractViolation("sample_batches: zero batch size");
  if (!(cfg.shell_sigma >= 0.0)) throw ContractViolation("sample_batches: shell sigma must be >= 0");
  TrainingBatch b;
  b.surface.reserve(cfg.surface);
  if (pts.size() >= cfg.surface) {
    // partial Fisher-Yates over an index permutation
    std::vector<std::size_t> idx(pts.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < cfg.surface; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
      b.surface.push_back(pts[idx[i]]);
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
    for (std::size_t i = 0; i < cfg.surface; ++i) b.surface.push_back(pts[pick(rng)]);
  }
  std::uniform_real_distribution<double> cube(-1.0, 1.0);
  b.offsurface.reserve(cfg.offsurface);
  for (std::size_t i = 0; i < cfg.offsurface; ++i) b.offsurface.emplace_back(cube(rng), cube(rng), cube(rng));
  const std::size_t shell = std::min(cfg.shell, cfg.surface);
  b.shell.assign(b.surface.begin(), b.surface.begin() + static_cast<std::ptrdiff_t>(shell));
  if (cfg.shell_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.shell_sigma);
    for (auto& p : b.shell) p += Vec3(noise(rng), noise(rng), noise(rng));
  }
  return b;
}

/// `n` points drawn uniformly by area, each with its face's unit normal.
inline PointCloud resample_mesh_surface(const TriangleMesh& mesh, std::size_t n, Rng& rng) {
  if (n == 0) throw ContractViolation("resample_mesh_surface: requested 0 points");
  mesh.validate();
  std::vector<double> areas(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < areas.size(); ++t) total += areas[t] = mesh.face_area(t);
  if (!(total > 0.0)) throw ContractViolation("resample_mesh_surface: mesh has zero area");
  std::discrete_distribution<std::size_t> face(areas.begin(), areas.end());
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  PointCloud out;
  out.points.reserve(n);
  out.normals.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = face(rng);
    const auto& tr = mesh.triangles[t];
    const double r1 = std::sqrt(uni(rng)), r2 = uni(rng);
    const Vec3& a = mesh.vertices[tr[0]];
    const Vec3& b = mesh.vertices[tr[1]];
    const Vec3& c = mesh.vertices[tr[2]];
    out.points.push_back((1 - r1) * a + r1 * (1 - r2) * b + r1 * r2 * c);
    out.normals.push_back(mesh.face_cross(t).normalized());
  }
  return out;
}

}  // namespace fdsdf
