#pragma once

// Synthetic two-modality BEV scenes with known cross-modal correspondence,
// calibration (spatial) and sensor-lag (temporal) misalignment models, and the
// alignment-quality metrics computed against that ground truth.
//
// Feature model: every object carries a latent z. Its LiDAR feature is
// A_L z + e_L and its camera feature A_C z + e_C, where A_L and A_C are fixed
// per sensor rig (seeded by SceneConfig::modality_seed, shared by all scenes).
// Features are splatted as truncated Gaussian bumps; heatmaps get unit-peak
// bumps plus (z, w, h, l, yaw) regression channels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "bevalign/alignfuse.hpp"
#include "bevalign/error.hpp"
#include "bevalign/grid.hpp"
#include "bevalign/instance.hpp"
#include "bevalign/pairing.hpp"
#include "bevalign/util.hpp"

namespace bevalign {

struct SceneConfig {
  GridMeta grid;
  std::size_t channels = 32;
  std::size_t n_objects = 10;
  std::size_t latent_dim = 8;
  double feature_noise = 0.05;   // sigma_f
  double bump_sigma = 1.0;       // cells
  double bump_radius = 2.0;      // cells; the bump is zero beyond this
  double cluster_radius = 4.0;   // meters; half-width of the placement square
  double min_separation = 1.5;   // meters between object centers
  double min_w = 0.8, max_w = 1.6;
  double min_h = 0.8, max_h = 1.6;
  double min_l = 1.0, max_l = 2.0;
  double max_speed = 5.0;        // m/s
  double static_fraction = 0.2;
  double edge_margin = 8.0;      // meters kept free between the cluster and the grid border
  std::uint64_t modality_seed = 20240601;
  std::uint64_t seed = 0;

  void validate() const {
    BEVALIGN_REQUIRE(n_objects >= 1, ErrorCode::InvalidConfig, "scenesim", "n_objects must be >= 1");
    BEVALIGN_REQUIRE(channels >= 1 && latent_dim >= 1, ErrorCode::InvalidConfig, "scenesim",
                     "channels and latent_dim must be >= 1");
    BEVALIGN_REQUIRE(feature_noise >= 0.0, ErrorCode::InvalidConfig, "scenesim", "feature_noise must be >= 0");
    BEVALIGN_REQUIRE(bump_sigma > 0.0 && bump_radius >= 0.0, ErrorCode::InvalidConfig, "scenesim",
                     "bump_sigma must be positive and bump_radius non-negative");
    BEVALIGN_REQUIRE(cluster_radius > 0.0 && min_separation >= 0.0, ErrorCode::InvalidConfig, "scenesim",
                     "cluster_radius must be positive");
    BEVALIGN_REQUIRE(min_w > 0 && max_w >= min_w && min_h > 0 && max_h >= min_h && min_l > 0 && max_l >= min_l,
                     ErrorCode::InvalidConfig, "scenesim", "object dimension ranges invalid");
    BEVALIGN_REQUIRE(max_speed >= 0.0 && static_fraction >= 0.0 && static_fraction <= 1.0,
                     ErrorCode::InvalidConfig, "scenesim", "velocity parameters invalid");
    const double span_x = grid.x_max() - grid.x_min();
    const double span_y = grid.y_max() - grid.y_min();
    BEVALIGN_REQUIRE(2 * (cluster_radius + edge_margin) < std::min(span_x, span_y), ErrorCode::InvalidConfig,
                     "scenesim", "cluster plus margins does not fit inside the grid");
  }
};

struct SceneObject {
  std::size_t id = 0;
  int label = 0;
  Point2 center;
  double z = 0.0;  // center height
  double w = 1.0, h = 1.0, l = 1.0;
  double yaw = 0.0;
  Point2 velocity;
  std::vector<double> latent;
};

struct NoiseSpec {
  double sigma_t = 0.0;  // meters, per axis
  double sigma_r = 0.0;  // radians
  double lag = 0.0;      // seconds

  void validate() const {
    BEVALIGN_REQUIRE(sigma_t >= 0.0 && sigma_r >= 0.0 && lag >= 0.0, ErrorCode::InvalidConfig, "scenesim",
                     "noise parameters must be non-negative");
  }
};

struct NoiseRecord {
  NoiseSpec spec;
  PlanarTransform drawn;  // spatial perturbation actually applied
};

// Camera-side state of one object (where the camera branch sees it).
struct CameraView {
  Point2 center;
  Point2 velocity;
  double yaw = 0.0;
};

struct Scene {
  SceneConfig config;
  std::vector<SceneObject> objects;
  std::vector<std::vector<double>> lidar_features;
  std::vector<std::vector<double>> camera_features;
  std::vector<CameraView> camera;
  FeatureMap lidar_map;
  FeatureMap lidar_heatmap;
  FeatureMap camera_map;
  FeatureMap camera_heatmap;
  PlanarTransform calibration;  // accumulated camera-side perturbation
  NoiseRecord noise;
  std::uint64_t seed = 0;
};

struct ModalityMatrices {
  std::vector<double> lidar;   // channels x latent_dim, row-major
  std::vector<double> camera;
};

inline ModalityMatrices modality_matrices(const SceneConfig& cfg) {
  Rng rng(mix64(cfg.modality_seed));
  std::normal_distribution<double> n01(0.0, 1.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
  ModalityMatrices m;
  m.lidar.resize(cfg.channels * cfg.latent_dim);
  m.camera.resize(cfg.channels * cfg.latent_dim);
  for (double& v : m.lidar) v = n01(rng) * scale;
  for (double& v : m.camera) v = n01(rng) * scale;
  return m;
}

inline std::vector<double> mat_vec(std::span<const double> a, std::size_t rows, std::span<const double> x) {
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) s += a[r * x.size() + c] * x[c];
    out[r] = s;
  }
  return out;
}

struct RenderedMaps {
  FeatureMap features;
  FeatureMap heatmap;
};

// Splats one bump per object: features add, heat takes the max and the
// regression channels follow the hottest bump.
inline RenderedMaps render_maps(const SceneConfig& cfg, Modality modality, std::span<const SceneObject> objects,
                                std::span<const Point2> centers, std::span<const double> yaws,
                                std::span<const std::vector<double>> features) {
  const GridMeta& meta = cfg.grid;
  RenderedMaps out{FeatureMap(meta, cfg.channels, modality),
                   FeatureMap(meta, 1 + kRegressionChannels, modality)};
  const double radius = cfg.bump_radius;
  const double inv_two_s2 = 1.0 / (2.0 * cfg.bump_sigma * cfg.bump_sigma);
  for (std::size_t o = 0; o < objects.size(); ++o) {
    const GridPoint g = world_to_grid(centers[o], meta);
    const long r_lo = std::max(0L, static_cast<long>(std::floor(g.row - radius)));
    const long r_hi = std::min(static_cast<long>(meta.height()) - 1, static_cast<long>(std::ceil(g.row + radius)));
    const long c_lo = std::max(0L, static_cast<long>(std::floor(g.col - radius)));
    const long c_hi = std::min(static_cast<long>(meta.width()) - 1, static_cast<long>(std::ceil(g.col + radius)));
    for (long r = r_lo; r <= r_hi; ++r) {
      for (long c = c_lo; c <= c_hi; ++c) {
        const double dr = static_cast<double>(r) - g.row;
        const double dc = static_cast<double>(c) - g.col;
        const double d2 = dr * dr + dc * dc;
        if (d2 > radius * radius) continue;
        const double weight = std::exp(-d2 * inv_two_s2);
        auto cell = out.features.cell(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
        for (std::size_t k = 0; k < cfg.channels; ++k) cell[k] += weight * features[o][k];
        auto heat = out.heatmap.cell(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
        if (weight > heat[0]) {
          heat[0] = weight;
          heat[1] = objects[o].z;
          heat[2] = objects[o].w;
          heat[3] = objects[o].h;
          heat[4] = objects[o].l;
          heat[5] = yaws[o];
        }
      }
    }
  }
  return out;
}

namespace detail {

inline bool boxes_intersect(const SceneObject& a, const SceneObject& b) {
  return std::abs(a.center.x - b.center.x) < (a.w + b.w) / 2 && std::abs(a.center.y - b.center.y) < (a.h + b.h) / 2;
}

inline void render_lidar(Scene& s) {
  std::vector<Point2> centers;
  std::vector<double> yaws;
  for (const auto& o : s.objects) {
    centers.push_back(o.center);
    yaws.push_back(o.yaw);
  }
  auto maps = render_maps(s.config, Modality::lidar, s.objects, centers, yaws, s.lidar_features);
  s.lidar_map = std::move(maps.features);
  s.lidar_heatmap = std::move(maps.heatmap);
}

inline void render_camera(Scene& s) {
  std::vector<Point2> centers;
  std::vector<double> yaws;
  for (const auto& v : s.camera) {
    centers.push_back(v.center);
    yaws.push_back(v.yaw);
  }
  auto maps = render_maps(s.config, Modality::camera, s.objects, centers, yaws, s.camera_features);
  s.camera_map = std::move(maps.features);
  s.camera_heatmap = std::move(maps.heatmap);
}

}  // namespace detail

// Deterministic in cfg (including cfg.seed). Object centers sit on grid cells.
inline Scene gen_scene(const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(mix64(cfg.seed));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  const GridMeta& meta = cfg.grid;
  const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  const double pad = cfg.cluster_radius + cfg.edge_margin;
  const Point2 cluster{uniform(meta.x_min() + pad, meta.x_max() - pad),
                       uniform(meta.y_min() + pad, meta.y_max() - pad)};

  std::vector<SceneObject> objects;
  objects.reserve(cfg.n_objects);
  for (std::size_t id = 0; id < cfg.n_objects; ++id) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      SceneObject o;
      o.id = id;
      const Point2 raw{uniform(cluster.x - cfg.cluster_radius, cluster.x + cfg.cluster_radius),
                       uniform(cluster.y - cfg.cluster_radius, cluster.y + cfg.cluster_radius)};
      const GridPoint g = world_to_grid(raw, meta);
      o.center = grid_to_world({std::round(g.row), std::round(g.col)}, meta);
      o.w = uniform(cfg.min_w, cfg.max_w);
      o.h = uniform(cfg.min_h, cfg.max_h);
      o.l = uniform(cfg.min_l, cfg.max_l);
      bool ok = meta.contains(o.center);
      for (const auto& other : objects) {
        if (!ok) break;
        const double dx = o.center.x - other.center.x;
        const double dy = o.center.y - other.center.y;
        ok = std::sqrt(dx * dx + dy * dy) >= cfg.min_separation && !detail::boxes_intersect(o, other);
      }
      if (ok) {
        objects.push_back(std::move(o));
        placed = true;
      }
    }
    BEVALIGN_REQUIRE(placed, ErrorCode::PlacementFailure, "scenesim",
                     "could not place object " + std::to_string(id) + " after 1000 attempts");
  }

  for (auto& o : objects) {
    o.z = uniform(0.0, 1.0);
    o.yaw = uniform(-std::numbers::pi, std::numbers::pi);
    if (u01(rng) >= cfg.static_fraction) {
      const double speed = uniform(0.0, cfg.max_speed);
      const double heading = uniform(-std::numbers::pi, std::numbers::pi);
      o.velocity = {speed * std::cos(heading), speed * std::sin(heading)};
    }
    o.latent.resize(cfg.latent_dim);
    for (double& v : o.latent) v = n01(rng);
  }

  const ModalityMatrices a = modality_matrices(cfg);
  Scene s{cfg,
          std::move(objects),
          {},
          {},
          {},
          FeatureMap(meta, cfg.channels, Modality::lidar),
          FeatureMap(meta, 1, Modality::lidar),
          FeatureMap(meta, cfg.channels, Modality::camera),
          FeatureMap(meta, 1, Modality::camera),
          PlanarTransform::identity(),
          {},
          cfg.seed};
  for (const auto& o : s.objects) {
    auto fl = mat_vec(a.lidar, cfg.channels, o.latent);
    auto fc = mat_vec(a.camera, cfg.channels, o.latent);
    for (double& v : fl) v += cfg.feature_noise * n01(rng);
    for (double& v : fc) v += cfg.feature_noise * n01(rng);
    s.lidar_features.push_back(std::move(fl));
    s.camera_features.push_back(std::move(fc));
    s.camera.push_back({o.center, o.velocity, o.yaw});
  }
  detail::render_lidar(s);
  detail::render_camera(s);
  return s;
}

// One rigid camera-side perturbation per scene: theta ~ N(0, sigma_r^2),
// t ~ N(0, sigma_t^2) per axis. Camera centers, velocities and yaws move with
// it; the LiDAR side is untouched.
inline Scene apply_spatial_noise(const Scene& scene, double sigma_t, double sigma_r, Rng& rng) {
  BEVALIGN_REQUIRE(sigma_t >= 0.0 && sigma_r >= 0.0, ErrorCode::InvalidConfig, "scenesim",
                   "spatial noise sigmas must be non-negative");
  std::normal_distribution<double> n01(0.0, 1.0);
  PlanarTransform t;
  t.theta = sigma_r * n01(rng);
  t.tx = sigma_t * n01(rng);
  t.ty = sigma_t * n01(rng);

  Scene out = scene;
  out.noise.spec.sigma_t = sigma_t;
  out.noise.spec.sigma_r = sigma_r;
  out.noise.drawn = t;
  if (sigma_t == 0.0 && sigma_r == 0.0) return out;

  const PlanarTransform rot{t.theta, 0.0, 0.0};
  for (auto& v : out.camera) {
    v.center = apply_transform(v.center, t);
    v.velocity = apply_transform(v.velocity, rot);
    v.yaw += t.theta;
  }
  out.calibration = compose(t, scene.calibration);
  detail::render_camera(out);
  return out;
}

// The camera observes each object `lag` seconds in the past: its camera-side
// center moves by -velocity * lag.
inline Scene apply_temporal_noise(const Scene& scene, double lag) {
  BEVALIGN_REQUIRE(lag >= 0.0, ErrorCode::InvalidConfig, "scenesim", "lag must be non-negative");
  Scene out = scene;
  out.noise.spec.lag = lag;
  if (lag == 0.0) return out;
  for (auto& v : out.camera) {
    v.center = {v.center.x - v.velocity.x * lag, v.center.y - v.velocity.y * lag};
  }
  detail::render_camera(out);
  return out;
}

inline Scene apply_noise(const Scene& scene, const NoiseSpec& noise, Rng& rng) {
  noise.validate();
  return apply_temporal_noise(apply_spatial_noise(scene, noise.sigma_t, noise.sigma_r, rng), noise.lag);
}

// Nearest object within 1.5x its box diagonal, per detection.
inline std::vector<std::optional<std::size_t>> assign_to_objects(std::span<const Instance> detections,
                                                                 std::span<const Point2> object_centers,
                                                                 std::span<const SceneObject> objects) {
  std::vector<std::optional<std::size_t>> out(detections.size());
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const Point2 p{detections[i].proposal.cx, detections[i].proposal.cy};
    double best = INFINITY;
    for (std::size_t o = 0; o < objects.size(); ++o) {
      const double dx = p.x - object_centers[o].x;
      const double dy = p.y - object_centers[o].y;
      const double d = std::sqrt(dx * dx + dy * dy);
      const double gate = 1.5 * std::sqrt(objects[o].w * objects[o].w + objects[o].h * objects[o].h);
      if (d <= gate && d < best) {
        best = d;
        out[i] = o;
      }
    }
  }
  return out;
}

inline std::vector<Point2> lidar_centers(const Scene& s) {
  std::vector<Point2> out;
  for (const auto& o : s.objects) out.push_back(o.center);
  return out;
}

inline std::vector<Point2> camera_centers(const Scene& s) {
  std::vector<Point2> out;
  for (const auto& v : s.camera) out.push_back(v.center);
  return out;
}

struct Correspondence {
  std::size_t object_id = 0;
  std::optional<std::size_t> lidar_peak;
  std::optional<std::size_t> camera_peak;
};

// Object id -> detected peak in each modality (first detection assigned to it).
inline std::vector<Correspondence> correspondence(const Scene& s, std::span<const Instance> lidar,
                                                  std::span<const Instance> camera) {
  const auto lc = lidar_centers(s);
  const auto cc = camera_centers(s);
  const auto la = assign_to_objects(lidar, lc, s.objects);
  const auto ca = assign_to_objects(camera, cc, s.objects);
  std::vector<Correspondence> out(s.objects.size());
  for (std::size_t o = 0; o < out.size(); ++o) out[o].object_id = s.objects[o].id;
  for (std::size_t i = 0; i < la.size(); ++i) {
    if (la[i] && !out[*la[i]].lidar_peak) out[*la[i]].lidar_peak = i;
  }
  for (std::size_t j = 0; j < ca.size(); ++j) {
    if (ca[j] && !out[*ca[j]].camera_peak) out[*ca[j]].camera_peak = j;
  }
  return out;
}

struct PipelineOutputs {
  std::vector<Instance> lidar;
  std::vector<Instance> camera;
  PairSet pairs;
  AlignmentResult alignment;
  double mean_loss = NAN;  // NaN when the variant has no loss (naive baseline)
};

struct Metrics {
  double recall_at_1 = 0.0;
  double mean_align_loss = NAN;
  double mean_center_error_before = 0.0;
  double mean_center_error_after = 0.0;
  std::size_t positive_pair_count = 0;
  std::size_t negative_pair_count = 0;
  std::size_t evaluated = 0;  // LiDAR instances matched to an object
};

// Scores an alignment against ground truth. "Before" error is the distance
// from the LiDAR detection to where the camera actually sees the object (what
// naive position-based fusion would suffer); "after" uses the chosen camera
// detection instead.
inline Metrics eval_alignment(const Scene& s, const PipelineOutputs& out) {
  BEVALIGN_REQUIRE(out.alignment.size() == out.lidar.size(), ErrorCode::NotRun, "scenesim",
                   "pipeline outputs are missing an alignment for this scene");
  Metrics m;
  m.mean_align_loss = out.mean_loss;
  m.positive_pair_count = out.pairs.positives.size();
  m.negative_pair_count = out.pairs.negative_count();

  const auto lc = lidar_centers(s);
  const auto cc = camera_centers(s);
  const auto la = assign_to_objects(out.lidar, lc, s.objects);
  const auto ca = assign_to_objects(out.camera, cc, s.objects);

  std::size_t hits = 0;
  double before = 0.0, after = 0.0;
  for (std::size_t i = 0; i < out.lidar.size(); ++i) {
    if (!la[i]) continue;
    ++m.evaluated;
    const std::size_t obj = *la[i];
    const Point2 truth = cc[obj];
    const Point2 lp{out.lidar[i].proposal.cx, out.lidar[i].proposal.cy};
    const double eb = std::hypot(lp.x - truth.x, lp.y - truth.y);
    before += eb;
    const auto& chosen = out.alignment[i].chosen;
    if (chosen) {
      const auto& cp = out.camera[*chosen].proposal;
      after += std::hypot(cp.cx - truth.x, cp.cy - truth.y);
      if (ca[*chosen] && *ca[*chosen] == obj) ++hits;
    } else {
      after += eb;
    }
  }
  if (m.evaluated > 0) {
    const double n = static_cast<double>(m.evaluated);
    m.recall_at_1 = static_cast<double>(hits) / n;
    m.mean_center_error_before = before / n;
    m.mean_center_error_after = after / n;
  }
  return m;
}

}  // namespace bevalign
