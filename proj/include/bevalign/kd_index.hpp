#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

#include "bevalign/error.hpp"
#include "bevalign/grid.hpp"

namespace bevalign {

// Balanced 2-D kd-tree over a fixed point set. k-nearest queries are exact and
// ordered by (squared distance, point index), so equidistant points resolve to
// the lower index exactly as a brute-force sort would.
class KdIndex {
 public:
  explicit KdIndex(std::vector<Point2> points) : points_(std::move(points)) {
    BEVALIGN_REQUIRE(!points_.empty(), ErrorCode::EmptyInput, "pairing",
                     "cannot build a kd index over zero centers");
    for (const Point2& p : points_) {
      BEVALIGN_REQUIRE(std::isfinite(p.x) && std::isfinite(p.y), ErrorCode::InvalidConfig,
                       "pairing", "kd index centers must be finite");
    }
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.resize(points_.size());
    root_ = build(0, order_.size());
  }

  std::size_t size() const { return points_.size(); }
  const std::vector<Point2>& points() const { return points_; }

  std::vector<std::size_t> knn(Point2 q, std::size_t k) const {
    k = std::min(k, points_.size());
    if (k == 0) return {};
    std::priority_queue<Candidate> heap;  // worst candidate on top
    search(root_, q, k, heap);
    std::vector<std::size_t> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = heap.top().index;
      heap.pop();
    }
    return out;
  }

 private:
  static constexpr std::int64_t kNone = -1;

  struct Node {
    std::size_t point = 0;
    int axis = 0;
    std::int64_t left = kNone;
    std::int64_t right = kNone;
  };

  struct Candidate {
    double dist2;
    std::size_t index;
    bool operator<(const Candidate& o) const {
      return dist2 != o.dist2 ? dist2 < o.dist2 : index < o.index;
    }
  };

  static double coord(Point2 p, int axis) { return axis == 0 ? p.x : p.y; }

  std::int64_t build(std::size_t lo, std::size_t hi) {
    if (lo >= hi) return kNone;
    double min_x = points_[order_[lo]].x, max_x = min_x;
    double min_y = points_[order_[lo]].y, max_y = min_y;
    for (std::size_t i = lo; i < hi; ++i) {
      const Point2& p = points_[order_[i]];
      min_x = std::min(min_x, p.x);
      max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
    const int axis = (max_x - min_x) >= (max_y - min_y) ? 0 : 1;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(lo),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(hi),
                     [&](std::size_t a, std::size_t b) {
                       const double ca = coord(points_[a], axis);
                       const double cb = coord(points_[b], axis);
                       return ca != cb ? ca < cb : a < b;
                     });
    const auto slot = static_cast<std::int64_t>(next_++);
    Node& node = nodes_[static_cast<std::size_t>(slot)];
    node.point = order_[mid];
    node.axis = axis;
    const std::int64_t left = build(lo, mid);
    const std::int64_t right = build(mid + 1, hi);
    nodes_[static_cast<std::size_t>(slot)].left = left;
    nodes_[static_cast<std::size_t>(slot)].right = right;
    return slot;
  }

  void search(std::int64_t slot, Point2 q, std::size_t k, std::priority_queue<Candidate>& heap) const {
    if (slot == kNone) return;
    const Node& node = nodes_[static_cast<std::size_t>(slot)];
    const Point2 p = points_[node.point];
    const double dx = p.x - q.x;
    const double dy = p.y - q.y;
    const Candidate cand{dx * dx + dy * dy, node.point};
    if (heap.size() < k) {
      heap.push(cand);
    } else if (cand < heap.top()) {
      heap.pop();
      heap.push(cand);
    }
    const double delta = coord(q, node.axis) - coord(p, node.axis);
    const std::int64_t near = delta < 0 ? node.left : node.right;
    const std::int64_t far = delta < 0 ? node.right : node.left;
    search(near, q, k, heap);
    // Equal plane distance must still be visited: a tie may carry a lower index.
    if (heap.size() < k || delta * delta <= heap.top().dist2) search(far, q, k, heap);
  }

  std::vector<Point2> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::size_t next_ = 0;
  std::int64_t root_ = kNone;
};

inline KdIndex build_kd(std::span<const Point2> centers) {
  return KdIndex(std::vector<Point2>(centers.begin(), centers.end()));
}

}  // namespace bevalign
