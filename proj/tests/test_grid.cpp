#include <cmath>
#include <numbers>
#include <random>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <gtest/gtest.h>

#include "bevalign/grid.hpp"
#include "bevalign/oracles.hpp"
#include "bevalign/util.hpp"

using namespace bevalign;
using big = boost::multiprecision::cpp_dec_float_50;

TEST(GridMeta, DefaultIs144Square) {
  const GridMeta m;
  EXPECT_EQ(m.height(), 144u);
  EXPECT_EQ(m.width(), 144u);
  EXPECT_EQ(m.resolution(), 0.75);
}

TEST(GridMeta, RejectsBadExtents) {
  EXPECT_THROW(GridMeta(1, 1, 0, 1, 1), Error);
  EXPECT_THROW(GridMeta(0, 1, 2, 1, 1), Error);
  EXPECT_THROW(GridMeta(0, 1, 0, 1, 0), Error);
  EXPECT_THROW(GridMeta(0, 1, 0, 1, -0.5), Error);
  EXPECT_THROW(GridMeta(0, 0.1, 0, 1, 1), Error);  // rounds to zero columns
  try {
    GridMeta(0, 1, 0, 1, 0);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    EXPECT_EQ(e.module(), "grid");
  }
}

TEST(GridMeta, DimensionsRound) {
  const GridMeta m(0, 10, 0, 5, 0.3);
  EXPECT_EQ(m.width(), static_cast<std::size_t>(std::llround(10 / 0.3)));
  EXPECT_EQ(m.height(), static_cast<std::size_t>(std::llround(5 / 0.3)));
}

TEST(WorldToGrid, CornerAndCenter) {
  const GridMeta m;
  const GridPoint corner = world_to_grid({m.x_min(), m.y_min()}, m);
  EXPECT_EQ(corner.row, 0.0);
  EXPECT_EQ(corner.col, 0.0);
  const GridPoint center = world_to_grid({0.0, 0.0}, m);
  EXPECT_EQ(center.row, 72.0);
  EXPECT_EQ(center.col, 72.0);
}

TEST(WorldToGrid, RowIsYColIsX) {
  const GridMeta m;
  const GridPoint g = world_to_grid({-54.0 + 1.5, -54.0 + 3.0}, m);
  EXPECT_DOUBLE_EQ(g.col, 2.0);
  EXPECT_DOUBLE_EQ(g.row, 4.0);
}

TEST(WorldToGrid, OutOfExtentAllowed) {
  const GridMeta m;
  const GridPoint g = world_to_grid({-60.0, 100.0}, m);
  EXPECT_LT(g.col, 0.0);
  EXPECT_GT(g.row, 143.0);
}

TEST(WorldToGrid, MatchesHighPrecisionOracle) {
  Rng rng(101);
  std::uniform_real_distribution<double> u(-54.0, 54.0);
  const GridMeta m;
  for (int t = 0; t < 1000; ++t) {
    const Point2 p{u(rng), u(rng)};
    const GridPoint g = world_to_grid(p, m);
    const big row = (big(p.y) - big(m.y_min())) / big(m.resolution());
    const big col = (big(p.x) - big(m.x_min())) / big(m.resolution());
    EXPECT_NEAR(g.row, row.convert_to<double>(), 1e-12);
    EXPECT_NEAR(g.col, col.convert_to<double>(), 1e-12);
  }
}

TEST(WorldToGrid, RoundTrip) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(-54.0, 54.0);
  const GridMeta m;
  for (int t = 0; t < 1000; ++t) {
    const Point2 p{u(rng), u(rng)};
    const Point2 back = grid_to_world(world_to_grid(p, m), m);
    EXPECT_NEAR(back.x, p.x, 1e-9);
    EXPECT_NEAR(back.y, p.y, 1e-9);
  }
}

TEST(PlanarTransform, IdentityAndQuarterTurn) {
  const Point2 p{3.25, -1.5};
  EXPECT_EQ(apply_transform(p, PlanarTransform::identity()), p);
  const Point2 q = apply_transform({1.0, 0.0}, {std::numbers::pi / 2, 0.0, 0.0});
  EXPECT_NEAR(q.x, 0.0, 1e-12);
  EXPECT_NEAR(q.y, 1.0, 1e-12);
}

TEST(PlanarTransform, MatchesHighPrecisionOracle) {
  Rng rng(17);
  std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> u(-54.0, 54.0);
  for (int t = 0; t < 500; ++t) {
    const PlanarTransform tr{ang(rng), u(rng), u(rng)};
    const Point2 p{u(rng), u(rng)};
    const Point2 got = apply_transform(p, tr);
    const big c = boost::multiprecision::cos(big(tr.theta));
    const big s = boost::multiprecision::sin(big(tr.theta));
    const big x = c * big(p.x) - s * big(p.y) + big(tr.tx);
    const big y = s * big(p.x) + c * big(p.y) + big(tr.ty);
    EXPECT_NEAR(got.x, x.convert_to<double>(), 1e-12);
    EXPECT_NEAR(got.y, y.convert_to<double>(), 1e-12);
  }
}

TEST(PlanarTransform, InverseComposesToIdentity) {
  Rng rng(23);
  std::uniform_real_distribution<double> ang(-3.0, 3.0);
  std::uniform_real_distribution<double> u(-54.0, 54.0);
  for (int t = 0; t < 500; ++t) {
    const PlanarTransform tr{ang(rng), u(rng), u(rng)};
    const Point2 p{u(rng), u(rng)};
    const Point2 a = apply_transform(apply_transform(p, tr), inverse(tr));
    const Point2 b = apply_transform(p, compose(inverse(tr), tr));
    const Point2 c = apply_transform(p, compose(tr, inverse(tr)));
    for (const Point2& r : {a, b, c}) {
      EXPECT_NEAR(r.x, p.x, 1e-9);
      EXPECT_NEAR(r.y, p.y, 1e-9);
    }
  }
}

TEST(PlanarTransform, ComposeAppliesRightFirst) {
  const PlanarTransform a{0.3, 1.0, -2.0};
  const PlanarTransform b{-1.1, 0.5, 4.0};
  const Point2 p{2.0, 7.0};
  const Point2 seq = apply_transform(apply_transform(p, b), a);
  const Point2 com = apply_transform(p, compose(a, b));
  EXPECT_NEAR(seq.x, com.x, 1e-12);
  EXPECT_NEAR(seq.y, com.y, 1e-12);
}

TEST(PlanarTransform, PreservesDistances) {
  Rng rng(29);
  std::uniform_real_distribution<double> u(-54.0, 54.0);
  for (int t = 0; t < 500; ++t) {
    const PlanarTransform tr{u(rng) / 10, u(rng), u(rng)};
    const Point2 p{u(rng), u(rng)}, q{u(rng), u(rng)};
    const Point2 tp = apply_transform(p, tr), tq = apply_transform(q, tr);
    EXPECT_NEAR(std::hypot(tp.x - tq.x, tp.y - tq.y), std::hypot(p.x - q.x, p.y - q.y), 1e-9);
  }
}

TEST(FeatureMap, ShapeAndFiniteness) {
  const GridMeta m(0, 4, 0, 3, 1);
  EXPECT_THROW(FeatureMap(m, 2, Modality::lidar, std::vector<double>(5)), Error);
  std::vector<double> bad(24, 0.0);
  bad[7] = NAN;
  EXPECT_THROW(FeatureMap(m, 2, Modality::lidar, bad), Error);
  bad[7] = INFINITY;
  EXPECT_THROW(FeatureMap(m, 2, Modality::lidar, bad), Error);
  EXPECT_THROW(FeatureMap(m, 0, Modality::lidar), Error);
  FeatureMap ok(m, 2, Modality::camera);
  EXPECT_EQ(ok.data().size(), 24u);
  ok.cell(2, 3)[1] = 5.0;
  EXPECT_EQ(ok.data()[(2 * 4 + 3) * 2 + 1], 5.0);
}

TEST(Modality, StringRoundTrip) {
  for (Modality m : {Modality::lidar, Modality::camera, Modality::fused}) {
    EXPECT_EQ(modality_from_string(to_string(m)), m);
  }
  EXPECT_THROW(modality_from_string("radar"), Error);
}

namespace {
FeatureMap ramp_map() {
  const GridMeta m(0, 8, 0, 8, 1);
  std::vector<double> d(64 * 2);
  for (std::size_t i = 0; i < 64; ++i) {
    d[2 * i] = static_cast<double>(i);
    d[2 * i + 1] = -0.5 * static_cast<double>(i * i);
  }
  return FeatureMap(m, 2, Modality::lidar, d);
}
}  // namespace

TEST(BilinearSample, LatticePointIsExact) {
  const FeatureMap map = ramp_map();
  const auto v = bilinear_sample(map, {3.0, 5.0});
  EXPECT_EQ(v[0], map.cell(3, 5)[0]);
  EXPECT_EQ(v[1], map.cell(3, 5)[1]);
  const auto corner = bilinear_sample(map, {7.0, 7.0});
  EXPECT_EQ(corner[1], map.cell(7, 7)[1]);
}

TEST(BilinearSample, HorizontalMidpoint) {
  const FeatureMap map = ramp_map();
  const auto v = bilinear_sample(map, {2.0, 4.5});
  EXPECT_DOUBLE_EQ(v[0], (map.cell(2, 4)[0] + map.cell(2, 5)[0]) / 2);
  EXPECT_DOUBLE_EQ(v[1], (map.cell(2, 4)[1] + map.cell(2, 5)[1]) / 2);
}

TEST(BilinearSample, OutOfBoundsThrows) {
  const FeatureMap map = ramp_map();
  for (GridPoint q : {GridPoint{-0.01, 3}, GridPoint{3, 7.0001}, GridPoint{7.5, 0}, GridPoint{NAN, 1}}) {
    try {
      bilinear_sample(map, q);
      ADD_FAILURE() << "expected OutOfBounds";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::OutOfBounds);
    }
  }
}

TEST(BilinearSample, MatchesTentOracle) {
  const auto rep = oracle::check_bilinear(77, 1000);
  EXPECT_TRUE(rep.pass) << rep.first_mismatch.dump();
  EXPECT_LE(rep.max_error, 1e-12);
}

TEST(BilinearSample, LinearInTheMap) {
  Rng rng(3);
  const FeatureMap a = oracle::random_map(rng, 8, 8, 3);
  const FeatureMap b = oracle::random_map(rng, 8, 8, 3);
  const double alpha = 0.7, beta = -2.3;
  std::vector<double> mix(a.data().size());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = alpha * a.data()[i] + beta * b.data()[i];
  const FeatureMap m(a.meta(), 3, Modality::lidar, mix);
  std::uniform_real_distribution<double> u(0.0, 7.0);
  for (int t = 0; t < 200; ++t) {
    const GridPoint q{u(rng), u(rng)};
    const auto sa = bilinear_sample(a, q), sb = bilinear_sample(b, q), sm = bilinear_sample(m, q);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(sm[k], alpha * sa[k] + beta * sb[k], 1e-9);
  }
}

TEST(ClampToGrid, ClampsIntoValidSquare) {
  const GridMeta m(0, 8, 0, 6, 1);
  const GridPoint q = clamp_to_grid({-3.0, 12.0}, m);
  EXPECT_EQ(q.row, 0.0);
  EXPECT_EQ(q.col, 7.0);
  const GridPoint in = clamp_to_grid({2.5, 3.5}, m);
  EXPECT_EQ(in.row, 2.5);
  EXPECT_EQ(in.col, 3.5);
}

TEST(Util, Hash64IsDeterministicAndSpreads) {
  EXPECT_EQ(hash64(1, 2), hash64(1, 2));
  EXPECT_NE(hash64(1, 2), hash64(1, 3));
  EXPECT_NE(hash64(1, 2), hash64(2, 1));
}

TEST(Util, ParallelForCoversEveryIndexOnce) {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; }, 4);
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(Util, ParallelForRethrows) {
  EXPECT_THROW(parallel_for(
                   10, [](std::size_t i) {
                     if (i == 7) throw std::runtime_error("boom");
                   },
                   3),
               std::runtime_error);
}
