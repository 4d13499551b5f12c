#pragma once

// Inference-time alignment: each LiDAR instance scores its K nearest camera
// instances through the projection heads and keeps the best one. The chosen
// camera features are then painted into a dedicated instance channel block of
// the channel-concatenated BEV map.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "bevalign/contrastive.hpp"
#include "bevalign/error.hpp"
#include "bevalign/grid.hpp"
#include "bevalign/instance.hpp"
#include "bevalign/kd_index.hpp"

namespace bevalign {

enum class Selection {
  similarity,  // argmax of head-space similarity among the K neighbors
  nearest,     // closest camera center; ignores features
};

struct AlignConfig {
  std::size_t k = 8;
  SimilarityMode similarity = SimilarityMode::cosine;
  Selection selection = Selection::similarity;
  bool normalize_inputs = true;  // must match TrainingConfig::normalize_inputs
};

struct AlignmentEntry {
  std::optional<std::size_t> chosen;   // camera instance index
  std::optional<std::size_t> rank;     // position of `chosen` within candidates
  double score = 0.0;
  std::vector<std::size_t> candidates;  // camera indices, nearest first
  std::vector<double> scores;           // parallel to candidates
};

using AlignmentResult = std::vector<AlignmentEntry>;  // one entry per LiDAR instance

inline std::vector<double> embed(const ProjectionHead& head, std::span<const double> roi, bool normalize) {
  return normalize ? head.project(l2_normalized(roi)) : head.project(roi);
}

// Scores `neighbors` (ordered by proximity) against the LiDAR instance and
// returns the argmax; equal scores resolve to the lower neighbor rank.
inline AlignmentEntry align(const RoiFeature& lidar, std::span<const RoiFeature* const> neighbors,
                            const HeadPair& heads, const AlignConfig& cfg) {
  BEVALIGN_REQUIRE(!neighbors.empty(), ErrorCode::EmptyNeighborhood, "alignfuse",
                   "no camera neighbors to align against");
  AlignmentEntry entry;
  entry.scores.reserve(neighbors.size());
  const auto e_l = embed(heads.lidar, lidar.values, cfg.normalize_inputs);
  for (const RoiFeature* n : neighbors) {
    const auto e_c = embed(heads.camera, n->values, cfg.normalize_inputs);
    entry.scores.push_back(cfg.similarity == SimilarityMode::cosine ? cosine_sim(e_l, e_c) : dot(e_l, e_c));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < entry.scores.size(); ++i) {
    if (entry.scores[i] > entry.scores[best]) best = i;
  }
  entry.rank = best;
  entry.score = entry.scores[best];
  return entry;
}

// Aligns every LiDAR instance against its K nearest camera instances. LiDAR
// instances with no camera detections pass through with no choice.
inline AlignmentResult align_scene(std::span<const Instance> lidar, std::span<const Instance> camera,
                                   const HeadPair* heads, const AlignConfig& cfg) {
  AlignmentResult result(lidar.size());
  if (camera.empty()) return result;
  std::vector<Point2> centers;
  centers.reserve(camera.size());
  for (const auto& c : camera) centers.push_back({c.proposal.cx, c.proposal.cy});
  const KdIndex index(std::move(centers));

  for (std::size_t i = 0; i < lidar.size(); ++i) {
    const Point2 q{lidar[i].proposal.cx, lidar[i].proposal.cy};
    const auto cand = index.knn(q, cfg.k);
    AlignmentEntry entry;
    if (cfg.selection == Selection::nearest || heads == nullptr) {
      BEVALIGN_REQUIRE(cfg.selection == Selection::nearest, ErrorCode::InvalidConfig, "alignfuse",
                       "similarity selection needs projection heads");
      entry.rank = 0;
      entry.score = 0.0;
      entry.scores.assign(cand.size(), 0.0);
    } else {
      std::vector<const RoiFeature*> neighbors;
      neighbors.reserve(cand.size());
      for (std::size_t j : cand) neighbors.push_back(&camera[j].roi);
      entry = align(lidar[i].roi, neighbors, *heads, cfg);
    }
    entry.candidates = cand;
    entry.chosen = cand[*entry.rank];
    result[i] = std::move(entry);
  }
  return result;
}

// Mean of the five sample blocks of an RoI vector.
inline std::vector<double> block_mean(const RoiFeature& roi) {
  const std::size_t c = roi.block_size();
  std::vector<double> out(c, 0.0);
  for (std::size_t b = 0; b < kRoiPoints; ++b) {
    for (std::size_t k = 0; k < c; ++k) out[k] += roi.values[b * c + k];
  }
  for (double& v : out) v /= static_cast<double>(kRoiPoints);
  return out;
}

struct ChannelLayout {
  std::size_t lidar = 0;
  std::size_t camera = 0;
  std::size_t instance = 0;
};

inline ChannelLayout fused_layout(const FeatureMap& lidar_map, const FeatureMap& camera_map) {
  return {lidar_map.channels(), camera_map.channels(), camera_map.channels()};
}

// Cells whose world position lies inside the (closed) axis-aligned box.
inline void for_each_box_cell(const GridMeta& meta, const Box2D& box, auto&& fn) {
  const double x0 = box.cx - box.w / 2, x1 = box.cx + box.w / 2;
  const double y0 = box.cy - box.h / 2, y1 = box.cy + box.h / 2;
  const double res = meta.resolution();
  const long c_lo = std::max(0L, static_cast<long>(std::ceil((x0 - meta.x_min()) / res)) - 1);
  const long c_hi = std::min(static_cast<long>(meta.width()) - 1,
                             static_cast<long>(std::floor((x1 - meta.x_min()) / res)) + 1);
  const long r_lo = std::max(0L, static_cast<long>(std::ceil((y0 - meta.y_min()) / res)) - 1);
  const long r_hi = std::min(static_cast<long>(meta.height()) - 1,
                             static_cast<long>(std::floor((y1 - meta.y_min()) / res)) + 1);
  for (long r = r_lo; r <= r_hi; ++r) {
    for (long c = c_lo; c <= c_hi; ++c) {
      const Point2 p = grid_to_world({static_cast<double>(r), static_cast<double>(c)}, meta);
      if (p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1) {
        fn(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
      }
    }
  }
}

// Concatenates [lidar | camera | instance] channels. Each aligned LiDAR
// instance writes the block mean of its chosen camera RoI into every cell of
// its own box; where boxes overlap the higher-scoring proposal wins (equal
// scores -> lower LiDAR index).
inline FeatureMap fuse(const FeatureMap& lidar_map, const FeatureMap& camera_map,
                       const AlignmentResult& alignment, std::span<const Instance> lidar,
                       std::span<const Instance> camera) {
  BEVALIGN_REQUIRE(lidar_map.meta() == camera_map.meta(), ErrorCode::MetaMismatch, "alignfuse",
                   "lidar and camera grids differ");
  BEVALIGN_REQUIRE(alignment.size() == lidar.size(), ErrorCode::LengthMismatch, "alignfuse",
                   "alignment must have one entry per LiDAR instance");
  const ChannelLayout layout = fused_layout(lidar_map, camera_map);
  const std::size_t total = layout.lidar + layout.camera + layout.instance;
  const GridMeta& meta = lidar_map.meta();

  std::vector<double> data(meta.cells() * total, 0.0);
  for (std::size_t cell = 0; cell < meta.cells(); ++cell) {
    std::copy_n(lidar_map.data().data() + cell * layout.lidar, layout.lidar, data.data() + cell * total);
    std::copy_n(camera_map.data().data() + cell * layout.camera, layout.camera,
                data.data() + cell * total + layout.lidar);
  }

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < alignment.size(); ++i) {
    if (alignment[i].chosen) order.push_back(i);
  }
  // Paint lowest priority first so the winner is written last.
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = lidar[a].proposal.score, sb = lidar[b].proposal.score;
    return sa != sb ? sa < sb : a > b;
  });
  for (std::size_t i : order) {
    const std::size_t j = *alignment[i].chosen;
    BEVALIGN_REQUIRE(j < camera.size(), ErrorCode::OutOfBounds, "alignfuse", "chosen camera index out of range");
    const auto feat = block_mean(camera[j].roi);
    BEVALIGN_REQUIRE(feat.size() == layout.instance, ErrorCode::LengthMismatch, "alignfuse",
                     "camera RoI block size differs from camera channel count");
    for_each_box_cell(meta, box_of(lidar[i].proposal), [&](std::size_t r, std::size_t c) {
      double* dst = data.data() + (r * meta.width() + c) * total + layout.lidar + layout.camera;
      std::copy(feat.begin(), feat.end(), dst);
    });
  }
  return FeatureMap(meta, total, Modality::fused, std::move(data));
}

}  // namespace bevalign
