#pragma once

// Brute-force reference implementations used by the `oracle` subcommand and
// the test suites. Each one is written independently of the production path
// it checks (no shared helpers beyond the data types).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "bevalign/grid.hpp"
#include "bevalign/instance.hpp"
#include "bevalign/kd_index.hpp"
#include "bevalign/pairing.hpp"
#include "bevalign/util.hpp"

namespace bevalign::oracle {

using json = nlohmann::json;

// Area counting on a square lattice of `cell`-sized pixels: a pixel belongs
// to a box when its center lies inside it.
inline double raster_iou(const Box2D& a, const Box2D& b, double cell = 0.01) {
  const double x_lo = std::min(a.cx - a.w / 2, b.cx - b.w / 2);
  const double x_hi = std::max(a.cx + a.w / 2, b.cx + b.w / 2);
  const double y_lo = std::min(a.cy - a.h / 2, b.cy - b.h / 2);
  const double y_hi = std::max(a.cy + a.h / 2, b.cy + b.h / 2);
  const auto nx = static_cast<long>(std::ceil((x_hi - x_lo) / cell));
  const auto ny = static_cast<long>(std::ceil((y_hi - y_lo) / cell));
  const auto inside = [](const Box2D& bx, double x, double y) {
    return std::abs(x - bx.cx) <= bx.w / 2 && std::abs(y - bx.cy) <= bx.h / 2;
  };
  long both = 0, either = 0;
  for (long iy = 0; iy < ny; ++iy) {
    const double y = y_lo + (static_cast<double>(iy) + 0.5) * cell;
    for (long ix = 0; ix < nx; ++ix) {
      const double x = x_lo + (static_cast<double>(ix) + 0.5) * cell;
      const bool in_a = inside(a, x, y);
      const bool in_b = inside(b, x, y);
      both += (in_a && in_b) ? 1 : 0;
      either += (in_a || in_b) ? 1 : 0;
    }
  }
  return either == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(either);
}

// Full sort by (squared distance, index), optionally skipping one index.
inline std::vector<std::size_t> brute_knn(const std::vector<Point2>& pts, Point2 q, std::size_t k,
                                          std::optional<std::size_t> exclude = std::nullopt) {
  std::vector<std::pair<double, std::size_t>> d;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (exclude && *exclude == i) continue;
    const double dx = pts[i].x - q.x;
    const double dy = pts[i].y - q.y;
    d.emplace_back(dx * dx + dy * dy, i);
  }
  std::sort(d.begin(), d.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, d.size()); ++i) out.push_back(d[i].second);
  return out;
}

// Tent-weight sum over the (up to) four lattice cells around q.
inline std::vector<double> tent_bilinear(const FeatureMap& map, GridPoint q) {
  std::vector<double> out(map.channels(), 0.0);
  const long r0 = static_cast<long>(std::floor(q.row));
  const long c0 = static_cast<long>(std::floor(q.col));
  for (long r = r0; r <= r0 + 1; ++r) {
    for (long c = c0; c <= c0 + 1; ++c) {
      if (r < 0 || c < 0 || r >= static_cast<long>(map.height()) || c >= static_cast<long>(map.width())) continue;
      const double wr = std::max(0.0, 1.0 - std::abs(q.row - static_cast<double>(r)));
      const double wc = std::max(0.0, 1.0 - std::abs(q.col - static_cast<double>(c)));
      const double w = wr * wc;
      if (w == 0.0) continue;
      const auto v = map.cell(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += w * v[k];
    }
  }
  return out;
}

struct PeakCell {
  std::size_t row, col;
  double score;
  friend bool operator==(const PeakCell&, const PeakCell&) = default;
};

// Exhaustive local-max scan of channel 0: a cell is a peak when it reaches
// thresh and every other cell of its window is lower, or equal but later in
// row-major order.
inline std::vector<PeakCell> brute_peaks(const FeatureMap& heat, int kernel, double thresh, std::size_t max_n) {
  const long rad = kernel / 2;
  const long H = static_cast<long>(heat.height()), W = static_cast<long>(heat.width());
  std::vector<PeakCell> out;
  for (long r = 0; r < H; ++r) {
    for (long c = 0; c < W; ++c) {
      const double v = heat.cell(static_cast<std::size_t>(r), static_cast<std::size_t>(c))[0];
      if (v < thresh) continue;
      bool peak = true;
      for (long dr = -rad; dr <= rad && peak; ++dr) {
        for (long dc = -rad; dc <= rad; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const long rr = r + dr, cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= H || cc >= W) continue;
          const double u = heat.cell(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc))[0];
          const bool earlier = rr * W + cc < r * W + c;
          if (u > v || (u == v && earlier)) {
            peak = false;
            break;
          }
        }
      }
      if (peak) out.push_back({static_cast<std::size_t>(r), static_cast<std::size_t>(c), v});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const PeakCell& a, const PeakCell& b) { return a.score > b.score; });
  if (out.size() > max_n) out.resize(max_n);
  return out;
}

// Overlap-length form of axis-aligned IoU.
inline double raster_free_iou(const Box2D& a, const Box2D& b) {
  const double ox = std::clamp((a.w + b.w) / 2 - std::abs(a.cx - b.cx), 0.0, std::min(a.w, b.w));
  const double oy = std::clamp((a.h + b.h) / 2 - std::abs(a.cy - b.cy), 0.0, std::min(a.h, b.h));
  const double inter = ox * oy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// Positive matching from the full IoU matrix, same greedy/tie rules.
inline std::vector<IndexPair> matrix_positive_pairs(const std::vector<Box2D>& lidar, const std::vector<Box2D>& camera,
                                                    double tau) {
  std::vector<std::vector<double>> m(lidar.size(), std::vector<double>(camera.size()));
  for (std::size_t i = 0; i < lidar.size(); ++i) {
    for (std::size_t j = 0; j < camera.size(); ++j) m[i][j] = raster_free_iou(lidar[i], camera[j]);
  }
  std::vector<IndexPair> out;
  std::vector<char> used(camera.size(), 0);
  for (std::size_t i = 0; i < lidar.size(); ++i) {
    double best = -1.0;
    std::size_t arg = camera.size();
    for (std::size_t j = 0; j < camera.size(); ++j) {
      if (!used[j] && m[i][j] >= tau && m[i][j] > best) {
        best = m[i][j];
        arg = j;
      }
    }
    if (arg < camera.size()) {
      used[arg] = 1;
      out.emplace_back(i, arg);
    }
  }
  return out;
}

inline Box2D random_box(Rng& rng) {
  std::uniform_real_distribution<double> pos(0.0, 5.0);
  std::uniform_real_distribution<double> size(1.0, 4.0);
  return {pos(rng), pos(rng), size(rng), size(rng)};
}

inline FeatureMap random_map(Rng& rng, std::size_t h, std::size_t w, std::size_t c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  GridMeta meta(0.0, static_cast<double>(w), 0.0, static_cast<double>(h), 1.0);
  std::vector<double> data(h * w * c);
  for (double& v : data) v = u(rng);
  return FeatureMap(meta, c, Modality::lidar, std::move(data));
}

// Heatmap with a few Gaussian bumps, values quantized to 1/64 so that
// plateaus (exact ties) actually occur.
inline FeatureMap random_heatmap(Rng& rng, std::size_t h, std::size_t w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GridMeta meta(0.0, static_cast<double>(w), 0.0, static_cast<double>(h), 1.0);
  std::vector<double> data(h * w, 0.0);
  const int bumps = 3 + static_cast<int>(u(rng) * 8);
  for (int b = 0; b < bumps; ++b) {
    const double r0 = u(rng) * static_cast<double>(h), c0 = u(rng) * static_cast<double>(w);
    const double amp = 0.2 + 0.8 * u(rng), s = 0.8 + 2.0 * u(rng);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const double d2 = (static_cast<double>(r) - r0) * (static_cast<double>(r) - r0) +
                          (static_cast<double>(c) - c0) * (static_cast<double>(c) - c0);
        data[r * w + c] = std::max(data[r * w + c], amp * std::exp(-d2 / (2 * s * s)));
      }
    }
  }
  for (double& v : data) v = std::round(v * 64.0) / 64.0;
  return FeatureMap(meta, 1, Modality::lidar, std::move(data));
}

struct Report {
  bool pass = true;
  std::size_t checked = 0;
  double max_error = 0.0;
  json first_mismatch;
};

inline Report check_iou(std::uint64_t seed, std::size_t trials, double tol = 2e-2) {
  Report rep;
  Rng rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    const Box2D a = random_box(rng), b = random_box(rng);
    const double got = iou(a, b), want = raster_iou(a, b);
    const double err = std::abs(got - want);
    rep.max_error = std::max(rep.max_error, err);
    ++rep.checked;
    if (err > tol && rep.pass) {
      rep.pass = false;
      rep.first_mismatch = {{"trial", t}, {"a", {a.cx, a.cy, a.w, a.h}}, {"b", {b.cx, b.cy, b.w, b.h}},
                            {"iou", got}, {"raster", want}};
    }
  }
  return rep;
}

// 1000 random points, `trials` random queries with k in [1, 16].
inline Report check_knn(std::uint64_t seed, std::size_t trials, std::size_t n_points = 1000) {
  Report rep;
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::vector<Point2> pts(n_points);
  for (auto& p : pts) {
    // Coarse quantization forces duplicate coordinates and distance ties.
    p = {std::round(u(rng) * 4.0) / 4.0, std::round(u(rng) * 4.0) / 4.0};
  }
  const KdIndex index(pts);
  std::uniform_int_distribution<std::size_t> kd(1, 16);
  for (std::size_t t = 0; t < trials; ++t) {
    const Point2 q{std::round(u(rng) * 4.0) / 4.0, std::round(u(rng) * 4.0) / 4.0};
    const std::size_t k = kd(rng);
    const auto got = index.knn(q, k);
    const auto want = brute_knn(pts, q, k);
    ++rep.checked;
    if (got != want && rep.pass) {
      rep.pass = false;
      rep.max_error = 1.0;
      rep.first_mismatch = {{"trial", t}, {"query", {q.x, q.y}}, {"k", k}, {"kd", got}, {"brute", want}};
    }
  }
  return rep;
}

inline Report check_bilinear(std::uint64_t seed, std::size_t trials, double tol = 1e-12) {
  Report rep;
  Rng rng(seed);
  const FeatureMap map = random_map(rng, 8, 8, 4);
  std::uniform_real_distribution<double> u(0.0, 7.0);
  for (std::size_t t = 0; t < trials; ++t) {
    GridPoint q{u(rng), u(rng)};
    // Every tenth draw lands on a lattice row/column or the far border.
    if (t % 10 == 0) q.row = std::floor(q.row);
    if (t % 10 == 5) q.col = 7.0;
    const auto got = bilinear_sample(map, q);
    const auto want = tent_bilinear(map, q);
    double err = 0.0;
    for (std::size_t k = 0; k < got.size(); ++k) err = std::max(err, std::abs(got[k] - want[k]));
    rep.max_error = std::max(rep.max_error, err);
    ++rep.checked;
    if (err > tol && rep.pass) {
      rep.pass = false;
      rep.first_mismatch = {{"trial", t}, {"q", {q.row, q.col}}, {"got", got}, {"want", want}};
    }
  }
  return rep;
}

inline Report check_peaks(std::uint64_t seed, std::size_t trials) {
  Report rep;
  Rng rng(seed);
  InstanceConfig cfg;
  cfg.kernel = 3;
  cfg.score_thresh = 0.1;
  cfg.max_n = 1000;
  for (std::size_t t = 0; t < trials; ++t) {
    const FeatureMap heat = random_heatmap(rng, 32, 32);
    const auto got = sparse_max_pool_peaks(heat, cfg);
    const auto want = brute_peaks(heat, cfg.kernel, cfg.score_thresh, cfg.max_n);
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) {
      const GridPoint g = world_to_grid({got[i].cx, got[i].cy}, heat.meta());
      same = std::llround(g.row) == static_cast<long long>(want[i].row) &&
             std::llround(g.col) == static_cast<long long>(want[i].col) && got[i].score == want[i].score;
    }
    ++rep.checked;
    if (!same && rep.pass) {
      rep.pass = false;
      rep.max_error = 1.0;
      rep.first_mismatch = {{"trial", t}, {"found", got.size()}, {"expected", want.size()}};
    }
  }
  return rep;
}

}  // namespace bevalign::oracle
