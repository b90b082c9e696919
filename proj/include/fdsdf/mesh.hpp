#pragma once

// Triangle meshes and zero level-set extraction by marching cubes.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "detail/mc_tables.hpp"
#include "error.hpp"
#include "types.hpp"

namespace fdsdf {

using Triangle = std::array<std::uint32_t, 3>;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;

  bool empty() const { return triangles.empty(); }

  Vec3 face_cross(std::size_t t) const {
    const auto& tr = triangles[t];
    return (vertices[tr[1]] - vertices[tr[0]]).cross(vertices[tr[2]] - vertices[tr[0]]);
  }
  double face_area(std::size_t t) const { return 0.5 * face_cross(t).norm(); }

  double area() const {
    double a = 0.0;
    for (std::size_t t = 0; t < triangles.size(); ++t) a += face_area(t);
    return a;
  }

  /// Sum of signed tetrahedron volumes; positive for a closed mesh whose
  /// faces wind counter-clockwise seen from outside.
  double signed_volume() const {
    double v = 0.0;
    for (const auto& t : triangles) v += vertices[t[0]].dot(vertices[t[1]].cross(vertices[t[2]]));
    return v / 6.0;
  }

  void validate() const {
    for (const auto& t : triangles)
      for (auto i : t)
        if (i >= vertices.size()) throw ContractViolation("mesh: triangle index out of range");
  }
};

/// Unit vertex normals, each the area-weighted mean of the incident faces.
inline std::vector<Vec3> vertex_normals(const TriangleMesh& mesh) {
  std::vector<Vec3> n(mesh.vertices.size(), Vec3::Zero());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Vec3 c = mesh.face_cross(t);  // |c| = 2 * area
    for (auto i : mesh.triangles[t]) n[i] += c;
  }
  for (auto& v : n) {
    const double len = v.norm();
    if (len > 0.0) v /= len;
  }
  return n;
}

/// Applies x -> scale * x + translate to every vertex.
inline void transform(TriangleMesh& mesh, double scale, const Vec3& translate) {
  for (auto& v : mesh.vertices) v = scale * v + translate;
}

struct GridSpec {
  std::size_t resolution = 128;  // samples per axis
  Bounds domain{Vec3::Constant(-1.0), Vec3::Constant(1.0)};

  double spacing(int axis) const { return domain.extent()[axis] / static_cast<double>(resolution - 1); }
  Vec3 point(std::size_t i, std::size_t j, std::size_t k) const {
    return domain.min + Vec3(static_cast<double>(i) * spacing(0), static_cast<double>(j) * spacing(1),
                             static_cast<double>(k) * spacing(2));
  }
};

/**
 * Triangulates {f = iso} on a regular grid. `field` is called with batches
 * of points (one z-slice at a time) and returns one value per point.
 * Vertices on shared cell edges are shared; zero-area triangles are dropped.
 * Faces wind so that their normals point towards increasing f.
 */
template <class BatchField>
TriangleMesh marching_cubes(BatchField&& field, const GridSpec& grid, double iso = 0.0) {
  const std::size_t n = grid.resolution;
  if (n < 8) throw ContractViolation("marching_cubes: resolution must be >= 8");
  const Vec3 ext = grid.domain.extent();
  if (!(ext.minCoeff() > 0.0)) throw ContractViolation("marching_cubes: empty domain");

  auto slice = [&](std::size_t k) {
    std::vector<Vec3> pts;
    pts.reserve(n * n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) pts.push_back(grid.point(i, j, k));
    std::vector<double> v = field(std::span<const Vec3>(pts));
    if (v.size() != pts.size()) throw ContractViolation("marching_cubes: field returned wrong count");
    for (double x : v)
      if (!std::isfinite(x)) throw ContractViolation("marching_cubes: field returned a non-finite value");
    return v;
  };

  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;
  auto grid_id = [&](std::size_t i, std::size_t j, std::size_t k) -> std::uint64_t { return (k * n + j) * n + i; };

  std::array<std::vector<double>, 2> layer = {slice(0), {}};
  for (std::size_t k = 0; k + 1 < n; ++k) {
    layer[1] = slice(k + 1);
    auto value = [&](std::size_t i, std::size_t j, std::size_t dk) { return layer[dk][j * n + i]; };
    for (std::size_t j = 0; j + 1 < n; ++j) {
      for (std::size_t i = 0; i + 1 < n; ++i) {
        std::array<double, 8> val;
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const auto& o = detail::kCorner[c];
          val[c] = value(i + o[0], j + o[1], o[2]);
          if (val[c] < iso) cube |= 1 << c;
        }
        const int edges = detail::kEdgeTable[cube];
        if (edges == 0) continue;
        std::array<std::uint32_t, 12> vid{};
        for (int e = 0; e < 12; ++e) {
          if (!(edges & (1 << e))) continue;
          const int a = detail::kEdgeCorners[e][0], b = detail::kEdgeCorners[e][1];
          const auto& oa = detail::kCorner[a];
          const auto& ob = detail::kCorner[b];
          // key: lower endpoint in grid order, plus the axis of the edge
          const std::size_t ai = i + oa[0], aj = j + oa[1], ak = k + oa[2];
          const std::size_t bi = i + ob[0], bj = j + ob[1], bk = k + ob[2];
          const int axis = bi != ai ? 0 : (bj != aj ? 1 : 2);
          const std::uint64_t lo = std::min(grid_id(ai, aj, ak), grid_id(bi, bj, bk));
          const std::uint64_t key = lo * 3 + static_cast<std::uint64_t>(axis);
          auto it = edge_vertex.find(key);
          if (it == edge_vertex.end()) {
            const double t = (iso - val[a]) / (val[b] - val[a]);
            const Vec3 pa = grid.point(ai, aj, ak), pb = grid.point(bi, bj, bk);
            it = edge_vertex.emplace(key, static_cast<std::uint32_t>(mesh.vertices.size())).first;
            mesh.vertices.push_back(pa + t * (pb - pa));
          }
          vid[e] = it->second;
        }
        const auto& tri = detail::kTriTable[cube];
        for (int t = 0; tri[t] != -1; t += 3) {
          // table order winds towards the inside; swap to face increasing f
          const Triangle face{vid[tri[t]], vid[tri[t + 2]], vid[tri[t + 1]]};
          if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) continue;
          const Vec3 cr = (mesh.vertices[face[1]] - mesh.vertices[face[0]])
                              .cross(mesh.vertices[face[2]] - mesh.vertices[face[0]]);
          if (!(cr.squaredNorm() > 0.0)) continue;
          mesh.triangles.push_back(face);
        }
      }
    }
    std::swap(layer[0], layer[1]);
  }
  if (mesh.triangles.empty()) throw EmptySurface("marching_cubes: no sign change of the field in the domain");

  // drop vertices only referenced by discarded triangles
  std::vector<std::uint32_t> remap(mesh.vertices.size(), UINT32_MAX);
  std::vector<Vec3> kept;
  for (auto& t : mesh.triangles)
    for (auto& i : t) {
      if (remap[i] == UINT32_MAX) {
        remap[i] = static_cast<std::uint32_t>(kept.size());
        kept.push_back(mesh.vertices[i]);
      }
      i = remap[i];
    }
  mesh.vertices = std::move(kept);
  return mesh;
}

}  // namespace fdsdf
