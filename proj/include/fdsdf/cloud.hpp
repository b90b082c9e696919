#pragma once

#include <vector>

#include "error.hpp"
#include "types.hpp"

namespace fdsdf {

/// Points in object units, optionally with unit normals (evaluation only).
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // empty, or one per point

  bool has_normals() const { return !normals.empty() && normals.size() == points.size(); }
  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  Bounds bbox() const {
    if (points.empty()) throw ContractViolation("bbox of an empty cloud");
    Bounds b{points.front(), points.front()};
    for (const auto& p : points) {
      b.min = b.min.cwiseMin(p);
      b.max = b.max.cwiseMax(p);
    }
    return b;
  }
};

}  // namespace fdsdf
