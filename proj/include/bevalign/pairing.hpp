#pragma once

// Contrastive pair construction: IoU-matched LiDAR/camera positives and
// K-nearest camera negatives around each positive.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "bevalign/error.hpp"
#include "bevalign/instance.hpp"
#include "bevalign/kd_index.hpp"

namespace bevalign {

// Axis-aligned intersection over union. Areas come from the same corner
// differences as the intersection so iou(a, a) is exactly 1.
inline double iou(const Box2D& a, const Box2D& b) {
  const double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2;
  const double ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
  const double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2;
  const double by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
  const double ix = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  const double iy = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  const double inter = ix * iy;
  const double uni = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

using IndexPair = std::pair<std::size_t, std::size_t>;  // (lidar i, camera j)

// One-to-one matching, greedy in LiDAR index order: each LiDAR box takes the
// free camera box of highest IoU (ties -> lower camera index) if it reaches
// tau_iou. A camera box is never reused.
inline std::vector<IndexPair> positive_pairs(std::span<const Box2D> lidar, std::span<const Box2D> camera,
                                             double tau_iou) {
  BEVALIGN_REQUIRE(tau_iou > 0.0 && tau_iou <= 1.0, ErrorCode::InvalidConfig, "pairing",
                   "tau_iou must lie in (0, 1]");
  std::vector<bool> taken(camera.size(), false);
  std::vector<IndexPair> out;
  for (std::size_t i = 0; i < lidar.size(); ++i) {
    std::optional<std::size_t> best;
    double best_iou = 0.0;
    for (std::size_t j = 0; j < camera.size(); ++j) {
      if (taken[j]) continue;
      const double v = iou(lidar[i], camera[j]);
      if (v >= tau_iou && (!best || v > best_iou)) {
        best = j;
        best_iou = v;
      }
    }
    if (best) {
      taken[*best] = true;
      out.emplace_back(i, *best);
    }
  }
  return out;
}

// The K camera instances nearest to `anchor`, excluding camera index
// `exclude`, ordered by ascending distance (ties -> lower index).
inline std::vector<std::size_t> knn_excluding(const KdIndex& index, Point2 anchor, std::size_t exclude,
                                              std::size_t k) {
  auto found = index.knn(anchor, k + 1);
  auto it = std::find(found.begin(), found.end(), exclude);
  if (it != found.end()) {
    found.erase(it);
  } else if (found.size() > k) {
    found.pop_back();
  }
  return found;
}

inline std::vector<std::size_t> knn_negatives(const IndexPair& pos, std::span<const Box2D> camera,
                                              const KdIndex& index, std::size_t k) {
  BEVALIGN_REQUIRE(k >= 1, ErrorCode::InvalidConfig, "pairing", "K must be >= 1");
  BEVALIGN_REQUIRE(pos.second < camera.size(), ErrorCode::OutOfBounds, "pairing",
                   "positive camera index out of range");
  const Box2D& b = camera[pos.second];
  return knn_excluding(index, {b.cx, b.cy}, pos.second, k);
}

enum class NeighborAnchor { camera, lidar };

struct PairingConfig {
  double tau_iou = 0.1;
  std::size_t k = 8;
  NeighborAnchor anchor = NeighborAnchor::camera;

  void validate() const {
    BEVALIGN_REQUIRE(tau_iou > 0.0 && tau_iou <= 1.0, ErrorCode::InvalidConfig, "pairing",
                     "tau_iou must lie in (0, 1]");
    BEVALIGN_REQUIRE(k >= 1, ErrorCode::InvalidConfig, "pairing", "K must be >= 1");
  }
};

struct PairSet {
  double tau_iou = 0.1;
  std::size_t k = 8;
  std::vector<IndexPair> positives;
  std::vector<std::vector<std::size_t>> negatives;  // parallel to positives

  std::size_t negative_count() const {
    std::size_t n = 0;
    for (const auto& v : negatives) n += v.size();
    return n;
  }
};

inline std::vector<Box2D> boxes_of(std::span<const Instance> instances) {
  std::vector<Box2D> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(box_of(inst.proposal));
  return out;
}

inline std::vector<Point2> centers_of(std::span<const Instance> instances) {
  std::vector<Point2> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back({inst.proposal.cx, inst.proposal.cy});
  return out;
}

inline PairSet build_pairs(std::span<const Instance> lidar, std::span<const Instance> camera,
                           const PairingConfig& cfg) {
  cfg.validate();
  PairSet set;
  set.tau_iou = cfg.tau_iou;
  set.k = cfg.k;
  const auto lidar_boxes = boxes_of(lidar);
  const auto camera_boxes = boxes_of(camera);
  set.positives = positive_pairs(lidar_boxes, camera_boxes, cfg.tau_iou);
  if (set.positives.empty()) return set;

  const KdIndex index = build_kd(centers_of(camera));
  set.negatives.reserve(set.positives.size());
  for (const auto& pos : set.positives) {
    if (cfg.anchor == NeighborAnchor::camera) {
      set.negatives.push_back(knn_negatives(pos, camera_boxes, index, cfg.k));
    } else {
      const Box2D& b = lidar_boxes[pos.first];
      set.negatives.push_back(knn_excluding(index, {b.cx, b.cy}, pos.second, cfg.k));
    }
  }
  return set;
}

}  // namespace bevalign
