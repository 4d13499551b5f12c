#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "bevalign/experiment.hpp"
#include "bevalign/io.hpp"
#include "bevalign/oracles.hpp"

using namespace bevalign;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / ("bevalign_io_" + std::string(info->name()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::NotRun;
}

}  // namespace

TEST(Bevf, HeaderAndLittleEndianPayload) {
  const std::string b = io::encode_tensor(1, 2, 1, {1.0, -2.5});
  ASSERT_EQ(b.size(), 16u + 8u);
  EXPECT_EQ(b.substr(0, 4), "BEVF");
  const auto u = [&](std::size_t i) { return static_cast<unsigned char>(b[i]); };
  EXPECT_EQ(u(4), 1);
  EXPECT_EQ(u(5) | u(6) | u(7), 0);
  EXPECT_EQ(u(8), 2);
  EXPECT_EQ(u(12), 1);
  // 1.0f = 0x3F800000, -2.5f = 0xC0200000, least significant byte first.
  EXPECT_EQ(u(16), 0x00);
  EXPECT_EQ(u(18), 0x80);
  EXPECT_EQ(u(19), 0x3F);
  EXPECT_EQ(u(22), 0x20);
  EXPECT_EQ(u(23), 0xC0);
}

TEST(Bevf, RoundTripIsFloat32Exact) {
  Rng rng(4);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> v(3 * 4 * 5);
  for (double& x : v) x = n01(rng);
  const io::RawTensor t = io::decode_tensor(io::encode_tensor(3, 4, 5, v));
  EXPECT_EQ(t.height, 3u);
  EXPECT_EQ(t.width, 4u);
  EXPECT_EQ(t.channels, 5u);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(t.values[i], static_cast<float>(v[i]));
}

TEST(Bevf, MalformedInputsAreFormatErrors) {
  const std::string good = io::encode_tensor(2, 2, 1, {1, 2, 3, 4});
  EXPECT_EQ(code_of([&] { io::decode_tensor(good.substr(0, 10)); }), ErrorCode::Format);
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(code_of([&] { io::decode_tensor(bad_magic); }), ErrorCode::Format);
  EXPECT_EQ(code_of([&] { io::decode_tensor(good.substr(0, good.size() - 1)); }), ErrorCode::Format);
  EXPECT_EQ(code_of([&] { io::decode_tensor(good + "xxxx"); }), ErrorCode::Format);
  EXPECT_EQ(code_of([&] { io::encode_tensor(2, 2, 2, {1, 2}); }), ErrorCode::LengthMismatch);
}

TEST(Bevf, FeatureMapWithSidecar) {
  TempDir dir;
  Rng rng(5);
  FeatureMap m = oracle::random_map(rng, 6, 8, 3);
  const fs::path p = dir.path() / "map.bevf";
  io::write_feature_map(p, m);
  ASSERT_TRUE(fs::exists(io::sidecar_path(p)));
  EXPECT_EQ(io::sidecar_path(p).filename(), "map.bevf.json");
  const FeatureMap r = io::read_feature_map(p);
  EXPECT_EQ(r.meta(), m.meta());
  EXPECT_EQ(r.channels(), 3u);
  EXPECT_EQ(r.modality(), m.modality());
  for (std::size_t i = 0; i < m.data().size(); ++i) EXPECT_EQ(r.data()[i], double(float(m.data()[i])));
  const auto side = io::read_json(io::sidecar_path(p));
  EXPECT_EQ(side.at("channels"), 3);
  EXPECT_FALSE(side.contains("layout"));
}

TEST(Bevf, FusedLayoutInSidecar) {
  TempDir dir;
  const FeatureMap f(GridMeta(0, 3, 0, 3, 1), 7, Modality::fused);
  const fs::path p = dir.path() / "fused.bevf";
  io::write_feature_map(p, f, ChannelLayout{2, 3, 2});
  const auto side = io::read_json(io::sidecar_path(p));
  EXPECT_EQ(side.at("modality"), "fused");
  EXPECT_EQ(side.at("layout").at("lidar"), nlohmann::json({0, 2}));
  EXPECT_EQ(side.at("layout").at("camera"), nlohmann::json({2, 5}));
  EXPECT_EQ(side.at("layout").at("instance"), nlohmann::json({5, 7}));
}

TEST(Bevf, SidecarGridMismatchRejected) {
  TempDir dir;
  const fs::path p = dir.path() / "m.bevf";
  io::write_feature_map(p, FeatureMap(GridMeta(0, 4, 0, 4, 1), 1, Modality::lidar));
  auto side = io::read_json(io::sidecar_path(p));
  side["grid"]["x_max"] = 8.0;
  io::write_json(io::sidecar_path(p), side);
  EXPECT_EQ(code_of([&] { io::read_feature_map(p); }), ErrorCode::Format);
  fs::remove(io::sidecar_path(p));
  EXPECT_THROW(io::read_feature_map(p), Error);
}

TEST(Bevf, HeadRoundTrip) {
  TempDir dir;
  TrainingConfig tc;
  const HeadPair h = init_heads(12, tc);
  io::write_head(dir.path() / "h.bevf", h.lidar);
  const ProjectionHead r = io::read_head(dir.path() / "h.bevf");
  EXPECT_EQ(r.d_in(), h.lidar.d_in());
  EXPECT_EQ(r.d_e(), h.lidar.d_e());
  for (std::size_t i = 0; i < r.weights().size(); ++i) EXPECT_EQ(r.weights()[i], double(float(h.lidar.weights()[i])));
}

TEST(Json, ProposalsRoundTrip) {
  std::vector<Proposal> ps(3);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ps[i] = {};
    ps[i].cx = 1.25 * double(i);
    ps[i].cy = -0.1 * double(i);
    ps[i].w = 1.5;
    ps[i].yaw = 0.3;
    ps[i].score = 0.9 - 0.1 * double(i);
    ps[i].label = int(i);
  }
  const auto j = io::proposals_to_json(ps);
  for (const char* key : {"cx", "cy", "z", "w", "h", "l", "yaw", "score", "label"}) EXPECT_TRUE(j[0].contains(key));
  const auto back = io::proposals_from_json(nlohmann::json::parse(j.dump()));
  ASSERT_EQ(back.size(), ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    EXPECT_EQ(back[i].cx, ps[i].cx);
    EXPECT_EQ(back[i].cy, ps[i].cy);
    EXPECT_EQ(back[i].score, ps[i].score);
    EXPECT_EQ(back[i].label, ps[i].label);
  }
}

TEST(Json, PairSetRoundTrip) {
  PairSet s;
  s.tau_iou = 0.1;
  s.k = 3;
  s.positives = {{0, 2}, {1, 0}};
  s.negatives = {{1, 3, 4}, {2}};
  const auto j = io::pairset_to_json(s);
  EXPECT_EQ(j.at("positives"), nlohmann::json::parse("[[0,2],[1,0]]"));
  const PairSet r = io::pairset_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(r.positives, s.positives);
  EXPECT_EQ(r.negatives, s.negatives);
  EXPECT_EQ(r.k, 3u);
  EXPECT_EQ(r.tau_iou, 0.1);
  EXPECT_THROW(io::pairset_from_json(nlohmann::json::object()), std::exception);
}

TEST(Json, ReadJsonBadFileIsFormat) {
  TempDir dir;
  io::detail::write_file(dir.path() / "x.json", "{not json");
  EXPECT_EQ(code_of([&] { io::read_json(dir.path() / "x.json"); }), ErrorCode::Format);
}

TEST(Bundle, RoundTripPreservesGeometryAndMaps) {
  TempDir dir;
  const ExperimentConfig cfg = config_from_json({{"n_scenes", 2}});
  const SceneRun r = run_scene(cfg, 0, {0.5, 0.02, 0.3});
  const auto corr = correspondence(r.scene, r.lidar, r.camera);
  io::write_scene_bundle(dir.path(), r.scene, corr);
  for (const char* f : {"lidar_features.bevf", "lidar_heatmap.bevf", "camera_features.bevf", "camera_heatmap.bevf",
                        "objects.json", "noise.json", "correspondence.json", "scene.json"}) {
    EXPECT_TRUE(fs::exists(dir.path() / f)) << f;
  }
  const Scene s = io::read_scene_bundle(dir.path());
  ASSERT_EQ(s.objects.size(), r.scene.objects.size());
  for (std::size_t o = 0; o < s.objects.size(); ++o) {
    EXPECT_EQ(s.objects[o].center.x, r.scene.objects[o].center.x);
    EXPECT_EQ(s.camera[o].center.y, r.scene.camera[o].center.y);
    EXPECT_EQ(s.objects[o].latent, r.scene.objects[o].latent);
  }
  EXPECT_EQ(s.noise.drawn.theta, r.scene.noise.drawn.theta);
  EXPECT_EQ(s.calibration.tx, r.scene.calibration.tx);
  EXPECT_EQ(s.noise.spec.lag, 0.3);
  EXPECT_EQ(s.seed, r.scene.seed);
  EXPECT_EQ(s.camera_map.meta(), r.scene.camera_map.meta());

  // Detection on reloaded (float32) maps yields the same instances and recall.
  const auto l = extract_instances(s.lidar_map, s.lidar_heatmap, cfg.instance);
  const auto c = extract_instances(s.camera_map, s.camera_heatmap, cfg.instance);
  ASSERT_EQ(l.size(), r.lidar.size());
  ASSERT_EQ(c.size(), r.camera.size());
  for (std::size_t i = 0; i < l.size(); ++i) EXPECT_NEAR(l[i].proposal.cx, r.lidar[i].proposal.cx, 1e-5);
}
