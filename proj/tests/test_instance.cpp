#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "bevalign/instance.hpp"
#include "bevalign/oracles.hpp"
#include "bevalign/scenesim.hpp"

using namespace bevalign;

namespace {

FeatureMap bump_heatmap(const GridMeta& meta, const std::vector<std::tuple<double, double, double>>& bumps) {
  FeatureMap heat(meta, 1, Modality::lidar);
  for (std::size_t r = 0; r < meta.height(); ++r) {
    for (std::size_t c = 0; c < meta.width(); ++c) {
      double v = 0.0;
      for (const auto& [br, bc, amp] : bumps) {
        const double d2 = (r - br) * (r - br) + (c - bc) * (c - bc);
        v = std::max(v, amp * std::exp(-d2 / 2.0));
      }
      heat.cell(r, c)[0] = v;
    }
  }
  return heat;
}

}  // namespace

TEST(Peaks, SingleBump) {
  const GridMeta meta;
  const FeatureMap heat = bump_heatmap(meta, {{10, 10, 1.0}});
  const auto ps = sparse_max_pool_peaks(heat, InstanceConfig{});
  ASSERT_EQ(ps.size(), 1u);
  const Point2 w = grid_to_world({10, 10}, meta);
  EXPECT_EQ(ps[0].cx, w.x);
  EXPECT_EQ(ps[0].cy, w.y);
  EXPECT_EQ(ps[0].score, 1.0);
  EXPECT_EQ(ps[0].w, InstanceConfig{}.default_w);
}

TEST(Peaks, ZeroHeatmapIsEmpty) {
  const FeatureMap heat(GridMeta{}, 1, Modality::lidar);
  EXPECT_TRUE(sparse_max_pool_peaks(heat, InstanceConfig{}).empty());
}

TEST(Peaks, InvalidKernel) {
  const FeatureMap heat(GridMeta{}, 1, Modality::lidar);
  for (int k : {0, 1, 2, 4, -3}) {
    InstanceConfig cfg;
    cfg.kernel = k;
    try {
      sparse_max_pool_peaks(heat, cfg);
      ADD_FAILURE() << "kernel " << k;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidKernel);
    }
  }
}

TEST(Peaks, MatchesBruteForceKernel3) {
  const auto rep = oracle::check_peaks(2024, 100);
  EXPECT_TRUE(rep.pass) << rep.first_mismatch.dump();
}

TEST(Peaks, MatchesBruteForceLargerKernels) {
  Rng rng(8);
  for (int kernel : {5, 7}) {
    InstanceConfig cfg;
    cfg.kernel = kernel;
    cfg.max_n = 1000;
    for (int t = 0; t < 30; ++t) {
      const FeatureMap heat = oracle::random_heatmap(rng, 24, 24);
      const auto got = sparse_max_pool_peaks(heat, cfg);
      const auto want = oracle::brute_peaks(heat, kernel, cfg.score_thresh, cfg.max_n);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        const GridPoint g = world_to_grid({got[i].cx, got[i].cy}, heat.meta());
        EXPECT_EQ(std::llround(g.row), static_cast<long long>(want[i].row));
        EXPECT_EQ(std::llround(g.col), static_cast<long long>(want[i].col));
      }
    }
  }
}

TEST(Peaks, PlateauGoesToLowestRowMajorIndex) {
  const GridMeta meta(0, 6, 0, 6, 1);
  FeatureMap heat(meta, 1, Modality::lidar);
  heat.cell(2, 3)[0] = 0.5;
  heat.cell(2, 2)[0] = 0.5;
  heat.cell(3, 2)[0] = 0.5;
  const auto ps = sparse_max_pool_peaks(heat, InstanceConfig{});
  ASSERT_EQ(ps.size(), 1u);
  EXPECT_EQ(ps[0].cx, 2.0);
  EXPECT_EQ(ps[0].cy, 2.0);
}

TEST(Peaks, NoTwoPeaksShareAWindow) {
  Rng rng(12);
  for (int kernel : {3, 5}) {
    InstanceConfig cfg;
    cfg.kernel = kernel;
    cfg.max_n = 1000;
    for (int t = 0; t < 30; ++t) {
      const FeatureMap heat = oracle::random_heatmap(rng, 32, 32);
      const auto ps = sparse_max_pool_peaks(heat, cfg);
      for (std::size_t i = 0; i < ps.size(); ++i) {
        for (std::size_t j = i + 1; j < ps.size(); ++j) {
          const bool same_window = std::abs(ps[i].cx - ps[j].cx) <= kernel / 2 &&
                                   std::abs(ps[i].cy - ps[j].cy) <= kernel / 2;
          EXPECT_FALSE(same_window);
        }
      }
    }
  }
}

TEST(Peaks, CountNonIncreasingInThreshold) {
  Rng rng(99);
  for (int t = 0; t < 20; ++t) {
    const FeatureMap heat = oracle::random_heatmap(rng, 32, 32);
    std::size_t prev = SIZE_MAX;
    for (double th : {0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0}) {
      InstanceConfig cfg;
      cfg.score_thresh = th;
      cfg.max_n = 1000;
      const std::size_t n = sparse_max_pool_peaks(heat, cfg).size();
      EXPECT_LE(n, prev);
      prev = n;
    }
  }
}

TEST(Peaks, SortedByScoreAndTruncated) {
  const GridMeta meta;
  const FeatureMap heat = bump_heatmap(meta, {{10, 10, 0.6}, {40, 40, 0.9}, {80, 20, 0.75}});
  InstanceConfig cfg;
  cfg.max_n = 2;
  const auto ps = sparse_max_pool_peaks(heat, cfg);
  ASSERT_EQ(ps.size(), 2u);
  EXPECT_EQ(ps[0].score, 0.9);
  EXPECT_EQ(ps[1].score, 0.75);
}

TEST(Peaks, RegressionChannelsFillBoxes) {
  const GridMeta meta(0, 10, 0, 10, 1);
  FeatureMap heat(meta, 1 + kRegressionChannels, Modality::camera);
  auto cell = heat.cell(4, 6);
  cell[0] = 0.8;
  cell[1] = 1.25;
  cell[2] = 2.0;
  cell[3] = 3.0;
  cell[4] = 4.0;
  cell[5] = 0.5;
  const auto ps = sparse_max_pool_peaks(heat, InstanceConfig{});
  ASSERT_EQ(ps.size(), 1u);
  EXPECT_EQ(ps[0].z, 1.25);
  EXPECT_EQ(ps[0].w, 2.0);
  EXPECT_EQ(ps[0].h, 3.0);
  EXPECT_EQ(ps[0].l, 4.0);
  EXPECT_EQ(ps[0].yaw, 0.5);
}

TEST(RoiSample, ConstantMap) {
  const GridMeta meta(0, 10, 0, 10, 1);
  std::vector<double> d(100 * 3);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = 0.25 * static_cast<double>(i % 3 + 1);
  const FeatureMap map(meta, 3, Modality::lidar, d);
  Proposal p;
  p.cx = 4.3;
  p.cy = 5.1;
  p.w = 3.0;
  p.h = 50.0;  // edge samples clamp
  const RoiFeature roi = roi_sample(map, p, 9);
  ASSERT_EQ(roi.values.size(), 15u);
  EXPECT_EQ(roi.block_size(), 3u);
  EXPECT_EQ(roi.proposal_id, 9u);
  for (std::size_t i = 0; i < 15; ++i) EXPECT_DOUBLE_EQ(roi.values[i], 0.25 * static_cast<double>(i % 3 + 1));
}

TEST(RoiSample, DegenerateBoxGivesIdenticalBlocks) {
  Rng rng(4);
  const FeatureMap map = oracle::random_map(rng, 10, 10, 4);
  Proposal p;
  p.cx = 3.7;
  p.cy = 6.2;
  p.w = 0.0;
  p.h = 0.0;
  const RoiFeature roi = roi_sample(map, p);
  for (std::size_t b = 1; b < kRoiPoints; ++b) {
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(roi.values[b * 4 + k], roi.values[k]);
  }
}

TEST(RoiSample, MatchesFivePointOracle) {
  Rng rng(31);
  std::uniform_real_distribution<double> pos(0.0, 12.0), dim(0.2, 6.0);
  const FeatureMap map = oracle::random_map(rng, 12, 12, 3);
  for (int t = 0; t < 200; ++t) {
    Proposal p;
    p.cx = pos(rng);
    p.cy = pos(rng);
    p.w = dim(rng);
    p.h = dim(rng);
    const RoiFeature roi = roi_sample(map, p);
    const Point2 pts[5] = {{p.cx, p.cy},
                           {p.cx, p.cy + p.h / 2},
                           {p.cx, p.cy - p.h / 2},
                           {p.cx - p.w / 2, p.cy},
                           {p.cx + p.w / 2, p.cy}};
    for (std::size_t b = 0; b < 5; ++b) {
      // Independent clamp: the valid square is [0, 11] on both axes here.
      const GridPoint q{std::clamp(pts[b].y, 0.0, 11.0), std::clamp(pts[b].x, 0.0, 11.0)};
      const auto want = oracle::tent_bilinear(map, q);
      for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(roi.values[b * 3 + k], want[k], 1e-12);
    }
  }
}

TEST(RoiSample, Deterministic) {
  Rng rng(1);
  const FeatureMap map = oracle::random_map(rng, 10, 10, 4);
  Proposal p;
  p.cx = 5.5;
  p.cy = 2.25;
  p.w = 1.3;
  p.h = 2.1;
  EXPECT_EQ(roi_sample(map, p).values, roi_sample(map, p).values);
}

TEST(RoiSample, YawAwareRotatesOffsets) {
  Proposal p;
  p.cx = 5.0;
  p.cy = 5.0;
  p.w = 2.0;
  p.h = 4.0;
  p.yaw = std::numbers::pi / 2;
  const auto plain = roi_sample_points(p, false);
  const auto rotated = roi_sample_points(p, true);
  EXPECT_EQ(plain[1].x, 5.0);
  EXPECT_EQ(plain[1].y, 7.0);
  EXPECT_NEAR(rotated[1].x, 3.0, 1e-12);
  EXPECT_NEAR(rotated[1].y, 5.0, 1e-12);
}

TEST(ExtractInstances, MetaMismatch) {
  const FeatureMap map(GridMeta(0, 10, 0, 10, 1), 2, Modality::lidar);
  const FeatureMap heat(GridMeta(0, 10, 0, 10, 0.5), 1, Modality::lidar);
  try {
    extract_instances(map, heat, InstanceConfig{});
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MetaMismatch);
  }
}

TEST(ExtractInstances, ZeroHeatmapIsEmpty) {
  const FeatureMap map(GridMeta{}, 4, Modality::lidar);
  const FeatureMap heat(GridMeta{}, 1, Modality::lidar);
  EXPECT_TRUE(extract_instances(map, heat, InstanceConfig{}).empty());
}

TEST(ExtractInstances, TruncatesToHighestScores) {
  const GridMeta meta;
  const FeatureMap heat = bump_heatmap(meta, {{20, 20, 0.5}, {60, 60, 0.95}, {100, 30, 0.7}});
  const FeatureMap map(meta, 4, Modality::lidar);
  InstanceConfig cfg;
  cfg.max_n = 2;
  const auto inst = extract_instances(map, heat, cfg);
  ASSERT_EQ(inst.size(), 2u);
  EXPECT_EQ(inst[0].proposal.score, 0.95);
  EXPECT_EQ(inst[1].proposal.score, 0.7);
  EXPECT_EQ(inst[0].roi.proposal_id, 0u);
  EXPECT_EQ(inst[1].roi.proposal_id, 1u);
}

TEST(ExtractInstances, SceneMatchesComposedOracle) {
  SceneConfig sc;
  sc.seed = 42;
  const Scene s = gen_scene(sc);
  const auto inst = extract_instances(s.lidar_map, s.lidar_heatmap, InstanceConfig{});
  const auto peaks = oracle::brute_peaks(s.lidar_heatmap, 3, 0.1, 200);
  ASSERT_EQ(inst.size(), peaks.size());
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const Point2 w = grid_to_world({double(peaks[i].row), double(peaks[i].col)}, s.config.grid);
    EXPECT_EQ(inst[i].proposal.cx, w.x);
    EXPECT_EQ(inst[i].proposal.cy, w.y);
    const auto pts = roi_sample_points(inst[i].proposal);
    for (std::size_t b = 0; b < kRoiPoints; ++b) {
      const auto want = oracle::tent_bilinear(
          s.lidar_map, clamp_to_grid(world_to_grid(pts[b], s.config.grid), s.config.grid));
      for (std::size_t k = 0; k < want.size(); ++k) {
        EXPECT_NEAR(inst[i].roi.values[b * want.size() + k], want[k], 1e-12);
      }
    }
  }
}
