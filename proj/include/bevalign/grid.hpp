#pragma once

// BEV grid geometry: metric extent <-> fractional cell coordinates, SE(2)
// calibration transforms and bilinear sampling of dense feature maps.
//
// Indexing convention (binding everywhere): row-major, row = y, col = x,
// channel-last. Cell (r, c) sits at world (x_min + c*res, y_min + r*res).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bevalign/error.hpp"

namespace bevalign {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

// Fractional grid coordinate.
struct GridPoint {
  double row = 0.0;
  double col = 0.0;
};

class GridMeta {
 public:
  GridMeta() : GridMeta(-54.0, 54.0, -54.0, 54.0, 0.75) {}

  GridMeta(double x_min, double x_max, double y_min, double y_max, double resolution)
      : x_min_(x_min), x_max_(x_max), y_min_(y_min), y_max_(y_max), resolution_(resolution) {
    BEVALIGN_REQUIRE(std::isfinite(x_min) && std::isfinite(x_max) && x_max > x_min,
                     ErrorCode::InvalidConfig, "grid", "x_max must exceed x_min");
    BEVALIGN_REQUIRE(std::isfinite(y_min) && std::isfinite(y_max) && y_max > y_min,
                     ErrorCode::InvalidConfig, "grid", "y_max must exceed y_min");
    BEVALIGN_REQUIRE(std::isfinite(resolution) && resolution > 0.0, ErrorCode::InvalidConfig,
                     "grid", "resolution must be positive");
    height_ = static_cast<std::size_t>(std::llround((y_max - y_min) / resolution));
    width_ = static_cast<std::size_t>(std::llround((x_max - x_min) / resolution));
    BEVALIGN_REQUIRE(height_ >= 1 && width_ >= 1, ErrorCode::InvalidConfig, "grid",
                     "extent smaller than one cell");
  }

  double x_min() const { return x_min_; }
  double x_max() const { return x_max_; }
  double y_min() const { return y_min_; }
  double y_max() const { return y_max_; }
  double resolution() const { return resolution_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t cells() const { return height_ * width_; }

  bool contains(Point2 p) const {
    return p.x >= x_min_ && p.x <= x_max_ && p.y >= y_min_ && p.y <= y_max_;
  }

  friend bool operator==(const GridMeta&, const GridMeta&) = default;

 private:
  double x_min_, x_max_, y_min_, y_max_, resolution_;
  std::size_t height_ = 0, width_ = 0;
};

inline GridPoint world_to_grid(Point2 p, const GridMeta& meta) {
  return {(p.y - meta.y_min()) / meta.resolution(), (p.x - meta.x_min()) / meta.resolution()};
}

inline Point2 grid_to_world(GridPoint q, const GridMeta& meta) {
  return {meta.x_min() + q.col * meta.resolution(), meta.y_min() + q.row * meta.resolution()};
}

enum class Modality { lidar, camera, fused };

inline std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::lidar: return "lidar";
    case Modality::camera: return "camera";
    case Modality::fused: return "fused";
  }
  return "unknown";
}

inline Modality modality_from_string(std::string_view s) {
  if (s == "lidar") return Modality::lidar;
  if (s == "camera") return Modality::camera;
  if (s == "fused") return Modality::fused;
  throw Error(ErrorCode::Format, "grid", "unknown modality '" + std::string(s) + "'");
}

// Dense H x W x C grid of finite values.
class FeatureMap {
 public:
  FeatureMap() : FeatureMap(GridMeta(0.0, 1.0, 0.0, 1.0, 1.0), 1, Modality::lidar) {}

  FeatureMap(GridMeta meta, std::size_t channels, Modality modality)
      : meta_(meta), channels_(channels), modality_(modality),
        data_(meta.cells() * channels, 0.0) {
    BEVALIGN_REQUIRE(channels >= 1, ErrorCode::InvalidConfig, "grid", "channel count must be >= 1");
  }

  FeatureMap(GridMeta meta, std::size_t channels, Modality modality, std::vector<double> data)
      : meta_(meta), channels_(channels), modality_(modality), data_(std::move(data)) {
    BEVALIGN_REQUIRE(channels >= 1, ErrorCode::InvalidConfig, "grid", "channel count must be >= 1");
    BEVALIGN_REQUIRE(data_.size() == meta_.cells() * channels_, ErrorCode::LengthMismatch, "grid",
                     "data length must equal H*W*C");
    for (double v : data_) {
      BEVALIGN_REQUIRE(std::isfinite(v), ErrorCode::Format, "grid", "feature values must be finite");
    }
  }

  const GridMeta& meta() const { return meta_; }
  std::size_t height() const { return meta_.height(); }
  std::size_t width() const { return meta_.width(); }
  std::size_t channels() const { return channels_; }
  Modality modality() const { return modality_; }

  std::span<const double> cell(std::size_t row, std::size_t col) const {
    return {data_.data() + (row * width() + col) * channels_, channels_};
  }
  std::span<double> cell(std::size_t row, std::size_t col) {
    return {data_.data() + (row * width() + col) * channels_, channels_};
  }

  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  GridMeta meta_;
  std::size_t channels_;
  Modality modality_;
  std::vector<double> data_;
};

// Rigid motion in the BEV plane: p' = R(theta) p + t.
struct PlanarTransform {
  double theta = 0.0;
  double tx = 0.0;
  double ty = 0.0;

  static PlanarTransform identity() { return {}; }
};

inline Point2 apply_transform(Point2 p, const PlanarTransform& t) {
  const double c = std::cos(t.theta);
  const double s = std::sin(t.theta);
  return {c * p.x - s * p.y + t.tx, s * p.x + c * p.y + t.ty};
}

inline PlanarTransform inverse(const PlanarTransform& t) {
  const double c = std::cos(t.theta);
  const double s = std::sin(t.theta);
  // R^T (-t)
  return {-t.theta, -(c * t.tx + s * t.ty), -(-s * t.tx + c * t.ty)};
}

// compose(a, b) applies b first, then a.
inline PlanarTransform compose(const PlanarTransform& a, const PlanarTransform& b) {
  const Point2 t = apply_transform({b.tx, b.ty}, a);
  return {a.theta + b.theta, t.x, t.y};
}

// Bilinear blend of the four cells around q. q must lie in
// [0, H-1] x [0, W-1]; integer coordinates return the cell vector exactly.
inline std::vector<double> bilinear_sample(const FeatureMap& map, GridPoint q) {
  const double max_row = static_cast<double>(map.height() - 1);
  const double max_col = static_cast<double>(map.width() - 1);
  if (!(q.row >= 0.0 && q.row <= max_row && q.col >= 0.0 && q.col <= max_col)) {
    throw Error(ErrorCode::OutOfBounds, "grid",
                "sample point (" + std::to_string(q.row) + ", " + std::to_string(q.col) +
                    ") outside valid grid square");
  }
  auto r0 = static_cast<std::size_t>(std::floor(q.row));
  auto c0 = static_cast<std::size_t>(std::floor(q.col));
  if (r0 + 1 >= map.height() && r0 > 0) --r0;
  if (c0 + 1 >= map.width() && c0 > 0) --c0;
  const std::size_t r1 = std::min(r0 + 1, map.height() - 1);
  const std::size_t c1 = std::min(c0 + 1, map.width() - 1);
  const double fr = q.row - static_cast<double>(r0);
  const double fc = q.col - static_cast<double>(c0);

  const double w00 = (1.0 - fr) * (1.0 - fc);
  const double w01 = (1.0 - fr) * fc;
  const double w10 = fr * (1.0 - fc);
  const double w11 = fr * fc;

  const auto v00 = map.cell(r0, c0);
  const auto v01 = map.cell(r0, c1);
  const auto v10 = map.cell(r1, c0);
  const auto v11 = map.cell(r1, c1);
  std::vector<double> out(map.channels());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = w00 * v00[k] + w01 * v01[k] + w10 * v10[k] + w11 * v11[k];
  }
  return out;
}

inline GridPoint clamp_to_grid(GridPoint q, const GridMeta& meta) {
  const double max_row = static_cast<double>(meta.height() - 1);
  const double max_col = static_cast<double>(meta.width() - 1);
  return {std::clamp(q.row, 0.0, max_row), std::clamp(q.col, 0.0, max_col)};
}

}  // namespace bevalign
