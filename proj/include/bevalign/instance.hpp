#pragma once

// Instance extraction from BEV maps: NMS-free heatmap peak picking followed by
// five-point RoI feature sampling (center plus the four edge midpoints).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "bevalign/error.hpp"
#include "bevalign/grid.hpp"

namespace bevalign {

struct Proposal {
  double cx = 0.0;  // meters
  double cy = 0.0;
  double z = 0.0;   // center height
  double w = 1.0;   // x extent
  double h = 1.0;   // y extent
  double l = 1.0;   // vertical extent
  double yaw = 0.0;
  double score = 0.0;
  int label = 0;

  friend bool operator==(const Proposal&, const Proposal&) = default;
};

// Axis-aligned BEV box.
struct Box2D {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

inline Box2D box_of(const Proposal& p) { return {p.cx, p.cy, p.w, p.h}; }

inline constexpr std::size_t kRoiPoints = 5;

struct RoiFeature {
  std::size_t proposal_id = 0;
  Modality modality = Modality::lidar;
  std::vector<double> values;  // kRoiPoints blocks of C_RoI, order [c, up, down, left, right]
  Box2D box;

  std::size_t block_size() const { return values.size() / kRoiPoints; }
};

struct Instance {
  Proposal proposal;
  RoiFeature roi;
};

struct InstanceConfig {
  int kernel = 3;
  double score_thresh = 0.1;
  std::size_t max_n = 200;
  // Leading heatmap channels are per-class scores. When the heatmap carries
  // five more channels they are read as (z, w, h, l, yaw) regression.
  std::size_t num_classes = 1;
  bool yaw_aware = false;
  double default_z = 0.0;
  double default_w = 1.0;
  double default_h = 1.0;
  double default_l = 1.0;

  void validate() const {
    BEVALIGN_REQUIRE(kernel >= 3 && kernel % 2 == 1, ErrorCode::InvalidKernel, "instance",
                     "kernel must be odd and >= 3, got " + std::to_string(kernel));
    BEVALIGN_REQUIRE(score_thresh >= 0.0 && score_thresh <= 1.0, ErrorCode::InvalidConfig,
                     "instance", "score_thresh must lie in [0, 1]");
    BEVALIGN_REQUIRE(num_classes >= 1, ErrorCode::InvalidConfig, "instance",
                     "num_classes must be >= 1");
    BEVALIGN_REQUIRE(default_w > 0 && default_h > 0 && default_l > 0, ErrorCode::InvalidConfig,
                     "instance", "default dims must be positive");
  }
};

inline constexpr std::size_t kRegressionChannels = 5;

namespace detail {

// One 3x3 max-pool layer over a single channel plane, borders padded with -inf.
inline std::vector<double> max_pool3(const std::vector<double>& in, std::size_t height,
                                     std::size_t width) {
  std::vector<double> rows(in.size());
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      double m = in[r * width + c];
      if (c > 0) m = std::max(m, in[r * width + c - 1]);
      if (c + 1 < width) m = std::max(m, in[r * width + c + 1]);
      rows[r * width + c] = m;
    }
  }
  std::vector<double> out(in.size());
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      double m = rows[r * width + c];
      if (r > 0) m = std::max(m, rows[(r - 1) * width + c]);
      if (r + 1 < height) m = std::max(m, rows[(r + 1) * width + c]);
      out[r * width + c] = m;
    }
  }
  return out;
}

}  // namespace detail

// Local maxima of each class heatmap within a kernel x kernel window, found by
// stacking (kernel-1)/2 3x3 max-pool layers. A cell survives if it equals the
// pooled maximum, reaches score_thresh, and no earlier (row-major) cell in its
// window holds the same value. Sorted by score descending, truncated to max_n.
inline std::vector<Proposal> sparse_max_pool_peaks(const FeatureMap& heatmap,
                                                   const InstanceConfig& cfg) {
  cfg.validate();
  BEVALIGN_REQUIRE(heatmap.channels() >= cfg.num_classes, ErrorCode::InvalidConfig, "instance",
                   "heatmap has fewer channels than num_classes");
  const bool has_regression = heatmap.channels() >= cfg.num_classes + kRegressionChannels;
  const std::size_t height = heatmap.height();
  const std::size_t width = heatmap.width();
  const long radius = cfg.kernel / 2;

  struct Peak {
    double score;
    std::size_t label;
    std::size_t index;
  };
  std::vector<Peak> peaks;

  std::vector<double> plane(height * width);
  for (std::size_t cls = 0; cls < cfg.num_classes; ++cls) {
    for (std::size_t i = 0; i < plane.size(); ++i) {
      plane[i] = heatmap.data()[i * heatmap.channels() + cls];
    }
    std::vector<double> pooled = plane;
    for (long layer = 0; layer < radius; ++layer) pooled = detail::max_pool3(pooled, height, width);

    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t c = 0; c < width; ++c) {
        const std::size_t idx = r * width + c;
        const double v = plane[idx];
        if (v < cfg.score_thresh || v != pooled[idx]) continue;
        // Plateau tie-break: an earlier equal cell in the window wins.
        bool dominated = false;
        const long r_lo = std::max<long>(0, static_cast<long>(r) - radius);
        const long c_lo = std::max<long>(0, static_cast<long>(c) - radius);
        const long c_hi = std::min<long>(static_cast<long>(width) - 1, static_cast<long>(c) + radius);
        for (long rr = r_lo; rr <= static_cast<long>(r) && !dominated; ++rr) {
          for (long cc = c_lo; cc <= c_hi; ++cc) {
            const std::size_t j = static_cast<std::size_t>(rr) * width + static_cast<std::size_t>(cc);
            if (j >= idx) break;
            if (plane[j] == v) {
              dominated = true;
              break;
            }
          }
        }
        if (!dominated) peaks.push_back({v, cls, idx});
      }
    }
  }

  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.label != b.label) return a.label < b.label;
    return a.index < b.index;
  });
  if (peaks.size() > cfg.max_n) peaks.resize(cfg.max_n);

  std::vector<Proposal> out;
  out.reserve(peaks.size());
  for (const Peak& pk : peaks) {
    const std::size_t r = pk.index / width;
    const std::size_t c = pk.index % width;
    const Point2 center = grid_to_world({static_cast<double>(r), static_cast<double>(c)}, heatmap.meta());
    Proposal p;
    p.cx = center.x;
    p.cy = center.y;
    p.score = pk.score;
    p.label = static_cast<int>(pk.label);
    if (has_regression) {
      const auto cell = heatmap.cell(r, c);
      const std::size_t base = cfg.num_classes;
      p.z = cell[base + 0];
      p.w = cell[base + 1] > 0.0 ? cell[base + 1] : cfg.default_w;
      p.h = cell[base + 2] > 0.0 ? cell[base + 2] : cfg.default_h;
      p.l = cell[base + 3] > 0.0 ? cell[base + 3] : cfg.default_l;
      p.yaw = cell[base + 4];
    } else {
      p.z = cfg.default_z;
      p.w = cfg.default_w;
      p.h = cfg.default_h;
      p.l = cfg.default_l;
    }
    out.push_back(p);
  }
  return out;
}

// World positions of the five sampling points, order [c, up, down, left, right].
inline std::array<Point2, kRoiPoints> roi_sample_points(const Proposal& p, bool yaw_aware = false) {
  std::array<Point2, kRoiPoints> offsets = {
      Point2{0.0, 0.0}, Point2{0.0, p.h / 2}, Point2{0.0, -p.h / 2},
      Point2{-p.w / 2, 0.0}, Point2{p.w / 2, 0.0}};
  std::array<Point2, kRoiPoints> pts{};
  const double c = std::cos(p.yaw);
  const double s = std::sin(p.yaw);
  for (std::size_t i = 0; i < kRoiPoints; ++i) {
    Point2 o = offsets[i];
    if (yaw_aware) o = {c * o.x - s * o.y, s * o.x + c * o.y};
    pts[i] = {p.cx + o.x, p.cy + o.y};
  }
  return pts;
}

// Samples the five points (clamped to the grid square) and concatenates them.
inline RoiFeature roi_sample(const FeatureMap& map, const Proposal& p, std::size_t proposal_id = 0,
                             bool yaw_aware = false) {
  RoiFeature roi;
  roi.proposal_id = proposal_id;
  roi.modality = map.modality();
  roi.box = box_of(p);
  roi.values.reserve(kRoiPoints * map.channels());
  for (const Point2& pt : roi_sample_points(p, yaw_aware)) {
    const auto v = bilinear_sample(map, clamp_to_grid(world_to_grid(pt, map.meta()), map.meta()));
    roi.values.insert(roi.values.end(), v.begin(), v.end());
  }
  return roi;
}

inline std::vector<Instance> extract_instances(const FeatureMap& map, const FeatureMap& heatmap,
                                               const InstanceConfig& cfg) {
  BEVALIGN_REQUIRE(map.meta() == heatmap.meta(), ErrorCode::MetaMismatch, "instance",
                   "feature map and heatmap grids differ");
  const auto proposals = sparse_max_pool_peaks(heatmap, cfg);
  std::vector<Instance> out;
  out.reserve(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    out.push_back({proposals[i], roi_sample(map, proposals[i], i, cfg.yaw_aware)});
  }
  return out;
}

}  // namespace bevalign
