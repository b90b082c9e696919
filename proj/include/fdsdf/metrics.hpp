#pragma once

// Point-set reconstruction metrics and the nearest-neighbour search behind
// them. Reported scalings: CD x 1e3, F1 x 1e2, NC x 1e2.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "cloud.hpp"
#include "error.hpp"
#include "types.hpp"

namespace fdsdf {

struct Neighbor {
  std::size_t index = 0;
  double distance = std::numeric_limits<double>::infinity();
};

/// k-d tree nearest-neighbour index. Results are exactly those of a linear
/// scan (same distance expression, same tie-break on index).
class NearestNeighbors {
 public:
  explicit NearestNeighbors(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
    if (points_.empty()) throw ContractViolation("nearest neighbours: empty point set");
    for (const auto& p : points_)
      if (!is_finite(p)) throw ContractViolation("nearest neighbours: non-finite point");
    order_.resize(points_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, order_.size());
  }

  std::size_t size() const { return points_.size(); }

  Neighbor nearest(const Vec3& q) const {
    Neighbor best;
    search(0, q, best);
    return best;
  }

 private:
  static constexpr std::size_t kLeafSize = 12;

  struct Node {
    std::size_t begin = 0, end = 0;  // range in order_
    std::size_t left = 0, right = 0;  // children (inner nodes)
    Vec3 lo, hi;                      // bounding box of the points below
    int axis = -1;                    // -1 for a leaf
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    Vec3 lo = points_[order_[begin]], hi = lo;
    for (std::size_t s = begin; s < end; ++s) {
      lo = lo.cwiseMin(points_[order_[s]]);
      hi = hi.cwiseMax(points_[order_[s]]);
    }
    nodes_.push_back({begin, end, 0, 0, lo, hi});
    if (end - begin <= kLeafSize) return id;
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (!(hi[axis] > lo[axis])) return id;  // all points coincide
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       return points_[a][axis] < points_[b][axis] || (points_[a][axis] == points_[b][axis] && a < b);
                     });
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    Node& n = nodes_[id];
    n.axis = axis;
    n.left = left;
    n.right = right;
    return id;
  }

  static double box_distance(const Node& n, const Vec3& q) {
    return (q.cwiseMax(n.lo).cwiseMin(n.hi) - q).norm();
  }

  void search(std::size_t id, const Vec3& q, Neighbor& best) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::size_t s = n.begin; s < n.end; ++s) {
        const std::size_t i = order_[s];
        const double d = (points_[i] - q).norm();
        if (d < best.distance || (d == best.distance && i < best.index)) best = {i, d};
      }
      return;
    }
    double dl = box_distance(nodes_[n.left], q), dr = box_distance(nodes_[n.right], q);
    std::size_t first = n.left, second = n.right;
    if (dr < dl) {
      std::swap(first, second);
      std::swap(dl, dr);
    }
    // ties must still be visited; the slack covers rounding in norm()
    if (dl <= best.distance * (1.0 + 1e-12)) search(first, q, best);
    if (dr <= best.distance * (1.0 + 1e-12)) search(second, q, best);
  }

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

/// Linear scan; the reference the tree must match.
inline Neighbor nearest_brute_force(std::span<const Vec3> points, const Vec3& q) {
  if (points.empty()) throw ContractViolation("nearest neighbours: empty point set");
  Neighbor best;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = (points[i] - q).norm();
    if (d < best.distance || (d == best.distance && i < best.index)) best = {i, d};
  }
  return best;
}

enum class Search { Tree, BruteForce };

/// Nearest neighbour in `target` of every query point.
inline std::vector<Neighbor> nearest_all(std::span<const Vec3> queries, std::span<const Vec3> target,
                                         Search search = Search::Tree, unsigned threads = 1) {
  if (queries.empty() || target.empty()) throw ContractViolation("metrics: empty point set");
  std::vector<Neighbor> out(queries.size());
  std::optional<NearestNeighbors> tree;
  if (search == Search::Tree) tree.emplace(target);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      out[i] = tree ? tree->nearest(queries[i]) : nearest_brute_force(target, queries[i]);
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(queries.size())));
  if (threads == 1) {
    work(0, queries.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (queries.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back(work, std::min(queries.size(), t * chunk), std::min(queries.size(), (t + 1) * chunk));
  }
  return out;
}

namespace detail {

inline double mean_distance(const std::vector<Neighbor>& nn) {
  double s = 0.0;
  for (const auto& n : nn) s += n.distance;
  return s / static_cast<double>(nn.size());
}

inline double max_distance(const std::vector<Neighbor>& nn) {
  double m = 0.0;
  for (const auto& n : nn) m = std::max(m, n.distance);
  return m;
}

}  // namespace detail

/// Symmetric Chamfer distance: mean of the two directed mean NN distances.
inline double chamfer(std::span<const Vec3> a, std::span<const Vec3> b, Search s = Search::Tree, unsigned threads = 1) {
  return 0.5 * (detail::mean_distance(nearest_all(a, b, s, threads)) +
                detail::mean_distance(nearest_all(b, a, s, threads)));
}

inline double hausdorff(std::span<const Vec3> a, std::span<const Vec3> b, Search s = Search::Tree,
                        unsigned threads = 1) {
  return std::max(detail::max_distance(nearest_all(a, b, s, threads)),
                  detail::max_distance(nearest_all(b, a, s, threads)));
}

/// F1 (x 100) of precision (pred near gt) and recall (gt near pred), where
/// "near" means a nearest-neighbour distance strictly below `threshold`.
inline double f1_score(std::span<const Vec3> pred, std::span<const Vec3> gt, double threshold,
                       Search s = Search::Tree, unsigned threads = 1) {
  if (!(threshold > 0.0)) throw ContractViolation("f1_score: threshold must be > 0");
  auto frac = [&](const std::vector<Neighbor>& nn) {
    std::size_t k = 0;
    for (const auto& n : nn) k += n.distance < threshold;
    return static_cast<double>(k) / static_cast<double>(nn.size());
  };
  const double p = frac(nearest_all(pred, gt, s, threads));
  const double r = frac(nearest_all(gt, pred, s, threads));
  return p + r > 0.0 ? 100.0 * 2.0 * p * r / (p + r) : 0.0;
}

/// Mean |cos| between normals of nearest-neighbour pairs, both directions,
/// x 100. Orientation does not matter.
inline double normal_consistency(const PointCloud& pred, const PointCloud& gt, Search s = Search::Tree,
                                 unsigned threads = 1) {
  if (!pred.has_normals() || !gt.has_normals()) throw ContractViolation("normal_consistency: normals required");
  for (const auto* c : {&pred, &gt})
    for (const auto& n : c->normals)
      if (!(std::abs(n.norm() - 1.0) < 1e-4)) throw ContractViolation("normal_consistency: normals must be unit length");
  auto directed = [&](const PointCloud& from, const PointCloud& to) {
    const auto nn = nearest_all(from.points, to.points, s, threads);
    double sum = 0.0;
    for (std::size_t i = 0; i < nn.size(); ++i) sum += std::abs(from.normals[i].dot(to.normals[nn[i].index]));
    return sum / static_cast<double>(nn.size());
  };
  return 100.0 * 0.5 * (directed(pred, gt) + directed(gt, pred));
}

struct MetricsReport {
  double cd_x1000 = 0.0;
  double f1_x100 = 0.0;
  double nc_x100 = std::numeric_limits<double>::quiet_NaN();  // NaN when either side lacks normals
  double hausdorff = 0.0;
};

struct MetricsConfig {
  double f1_threshold = 0.005;
  unsigned threads = 1;
};

inline MetricsReport compute_metrics(const PointCloud& pred, const PointCloud& gt, const MetricsConfig& cfg = {}) {
  MetricsReport r;
  const auto ab = nearest_all(pred.points, gt.points, Search::Tree, cfg.threads);
  const auto ba = nearest_all(gt.points, pred.points, Search::Tree, cfg.threads);
  r.cd_x1000 = 1e3 * 0.5 * (detail::mean_distance(ab) + detail::mean_distance(ba));
  r.hausdorff = std::max(detail::max_distance(ab), detail::max_distance(ba));
  if (!(cfg.f1_threshold > 0.0)) throw ContractViolation("f1_score: threshold must be > 0");
  auto frac = [&](const std::vector<Neighbor>& nn) {
    std::size_t k = 0;
    for (const auto& n : nn) k += n.distance < cfg.f1_threshold;
    return static_cast<double>(k) / static_cast<double>(nn.size());
  };
  const double p = frac(ab), rc = frac(ba);
  r.f1_x100 = p + rc > 0.0 ? 100.0 * 2.0 * p * rc / (p + rc) : 0.0;
  if (pred.has_normals() && gt.has_normals()) r.nc_x100 = normal_consistency(pred, gt, Search::Tree, cfg.threads);
  return r;
}

}  // namespace fdsdf
