#pragma once

// On-disk formats.
//
// FeatureMap container: 16-byte header (magic "BEVF", then u32 little-endian
// H, W, C) followed by H*W*C little-endian IEEE-754 float32 values, row-major,
// channel-last. A sidecar `<file>.json` carries the GridMeta, the modality
// tag and, for fused maps, the channel layout.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bevalign/alignfuse.hpp"
#include "bevalign/contrastive.hpp"
#include "bevalign/error.hpp"
#include "bevalign/grid.hpp"
#include "bevalign/instance.hpp"
#include "bevalign/pairing.hpp"
#include "bevalign/scenesim.hpp"

namespace bevalign::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr std::array<char, 4> kMagic = {'B', 'E', 'V', 'F'};
inline constexpr std::size_t kHeaderBytes = 16;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  BEVALIGN_REQUIRE(in.good(), ErrorCode::Format, "io", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  BEVALIGN_REQUIRE(out.good(), ErrorCode::Format, "io", "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  BEVALIGN_REQUIRE(out.good(), ErrorCode::Format, "io", "short write to " + path.string());
}

}  // namespace detail

// Raw tensor payload (no sidecar).
struct RawTensor {
  std::uint32_t height = 0, width = 0, channels = 0;
  std::vector<float> values;
};

inline std::string encode_tensor(std::uint32_t h, std::uint32_t w, std::uint32_t c, const std::vector<double>& data) {
  BEVALIGN_REQUIRE(data.size() == static_cast<std::size_t>(h) * w * c, ErrorCode::LengthMismatch, "io",
                   "tensor payload does not match its shape");
  std::string out;
  out.reserve(kHeaderBytes + data.size() * 4);
  out.append(kMagic.data(), kMagic.size());
  detail::put_u32(out, h);
  detail::put_u32(out, w);
  detail::put_u32(out, c);
  for (double v : data) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    detail::put_u32(out, bits);
  }
  return out;
}

inline RawTensor decode_tensor(const std::string& bytes) {
  BEVALIGN_REQUIRE(bytes.size() >= kHeaderBytes, ErrorCode::Format, "io", "truncated BEVF header");
  BEVALIGN_REQUIRE(std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) == 0, ErrorCode::Format, "io",
                   "bad BEVF magic");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  RawTensor t;
  t.height = detail::get_u32(p + 4);
  t.width = detail::get_u32(p + 8);
  t.channels = detail::get_u32(p + 12);
  const std::size_t n = static_cast<std::size_t>(t.height) * t.width * t.channels;
  BEVALIGN_REQUIRE(bytes.size() == kHeaderBytes + 4 * n, ErrorCode::Format, "io",
                   "BEVF payload length does not match header");
  t.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    t.values[i] = std::bit_cast<float>(detail::get_u32(p + kHeaderBytes + 4 * i));
  }
  return t;
}

inline json meta_to_json(const GridMeta& m) {
  return {{"x_min", m.x_min()}, {"x_max", m.x_max()}, {"y_min", m.y_min()},
          {"y_max", m.y_max()}, {"resolution", m.resolution()}, {"height", m.height()},
          {"width", m.width()}};
}

inline GridMeta meta_from_json(const json& j) {
  return GridMeta(j.at("x_min").get<double>(), j.at("x_max").get<double>(), j.at("y_min").get<double>(),
                  j.at("y_max").get<double>(), j.at("resolution").get<double>());
}

inline fs::path sidecar_path(const fs::path& path) { return fs::path(path.string() + ".json"); }

inline void write_feature_map(const fs::path& path, const FeatureMap& map,
                              const std::optional<ChannelLayout>& layout = std::nullopt) {
  detail::write_file(path, encode_tensor(static_cast<std::uint32_t>(map.height()),
                                         static_cast<std::uint32_t>(map.width()),
                                         static_cast<std::uint32_t>(map.channels()), map.data()));
  json side = {{"grid", meta_to_json(map.meta())},
               {"channels", map.channels()},
               {"modality", std::string(to_string(map.modality()))}};
  if (layout) {
    side["layout"] = {{"lidar", {0, layout->lidar}},
                      {"camera", {layout->lidar, layout->lidar + layout->camera}},
                      {"instance", {layout->lidar + layout->camera, layout->lidar + layout->camera + layout->instance}}};
  }
  detail::write_file(sidecar_path(path), side.dump(2) + "\n");
}

inline FeatureMap read_feature_map(const fs::path& path) {
  const RawTensor t = decode_tensor(detail::read_file(path));
  json side;
  try {
    side = json::parse(detail::read_file(sidecar_path(path)));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, "io", "bad sidecar for " + path.string() + ": " + e.what());
  }
  const GridMeta meta = meta_from_json(side.at("grid"));
  BEVALIGN_REQUIRE(meta.height() == t.height && meta.width() == t.width, ErrorCode::Format, "io",
                   "sidecar grid disagrees with tensor header in " + path.string());
  std::vector<double> data(t.values.begin(), t.values.end());
  return FeatureMap(meta, t.channels, modality_from_string(side.at("modality").get<std::string>()),
                    std::move(data));
}

// Head weights travel in the same container with H = d_in, W = d_e, C = 1.
inline void write_head(const fs::path& path, const ProjectionHead& head) {
  detail::write_file(path, encode_tensor(static_cast<std::uint32_t>(head.d_in()),
                                         static_cast<std::uint32_t>(head.d_e()), 1, head.weights()));
}

inline ProjectionHead read_head(const fs::path& path) {
  const RawTensor t = decode_tensor(detail::read_file(path));
  BEVALIGN_REQUIRE(t.channels == 1, ErrorCode::Format, "io", "head container must have C = 1");
  return ProjectionHead(t.height, t.width, std::vector<double>(t.values.begin(), t.values.end()));
}

inline json proposals_to_json(std::span<const Proposal> ps) {
  json arr = json::array();
  for (const auto& p : ps) {
    arr.push_back({{"cx", p.cx}, {"cy", p.cy}, {"z", p.z}, {"w", p.w}, {"h", p.h}, {"l", p.l},
                   {"yaw", p.yaw}, {"score", p.score}, {"label", p.label}});
  }
  return arr;
}

inline std::vector<Proposal> proposals_from_json(const json& arr) {
  std::vector<Proposal> out;
  for (const auto& j : arr) {
    Proposal p;
    p.cx = j.at("cx").get<double>();
    p.cy = j.at("cy").get<double>();
    p.z = j.at("z").get<double>();
    p.w = j.at("w").get<double>();
    p.h = j.at("h").get<double>();
    p.l = j.at("l").get<double>();
    p.yaw = j.at("yaw").get<double>();
    p.score = j.at("score").get<double>();
    p.label = j.at("label").get<int>();
    out.push_back(p);
  }
  return out;
}

inline json pairset_to_json(const PairSet& set) {
  json pos = json::array();
  for (const auto& [i, j] : set.positives) pos.push_back({i, j});
  return {{"tau_iou", set.tau_iou}, {"K", set.k}, {"positives", pos}, {"negatives", set.negatives}};
}

inline PairSet pairset_from_json(const json& j) {
  PairSet set;
  set.tau_iou = j.at("tau_iou").get<double>();
  set.k = j.at("K").get<std::size_t>();
  for (const auto& p : j.at("positives")) set.positives.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
  set.negatives = j.at("negatives").get<std::vector<std::vector<std::size_t>>>();
  return set;
}

inline json alignment_to_json(const AlignmentResult& result) {
  json arr = json::array();
  for (const auto& e : result) {
    arr.push_back({{"chosen", e.chosen ? json(*e.chosen) : json(nullptr)},
                   {"score", e.score},
                   {"candidates", e.candidates},
                   {"scores", e.scores}});
  }
  return arr;
}

inline json objects_to_json(const Scene& s) {
  json arr = json::array();
  for (std::size_t o = 0; o < s.objects.size(); ++o) {
    const auto& ob = s.objects[o];
    const auto& cv = s.camera[o];
    arr.push_back({{"id", ob.id},
                   {"label", ob.label},
                   {"cx", ob.center.x},
                   {"cy", ob.center.y},
                   {"z", ob.z},
                   {"w", ob.w},
                   {"h", ob.h},
                   {"l", ob.l},
                   {"yaw", ob.yaw},
                   {"vx", ob.velocity.x},
                   {"vy", ob.velocity.y},
                   {"latent", ob.latent},
                   {"camera", {{"cx", cv.center.x}, {"cy", cv.center.y}, {"vx", cv.velocity.x},
                               {"vy", cv.velocity.y}, {"yaw", cv.yaw}}}});
  }
  return arr;
}

inline json noise_to_json(const NoiseRecord& n, const PlanarTransform& calibration) {
  return {{"sigma_t", n.spec.sigma_t},
          {"sigma_r", n.spec.sigma_r},
          {"lag", n.spec.lag},
          {"drawn", {{"theta", n.drawn.theta}, {"tx", n.drawn.tx}, {"ty", n.drawn.ty}}},
          {"calibration", {{"theta", calibration.theta}, {"tx", calibration.tx}, {"ty", calibration.ty}}}};
}

inline json correspondence_to_json(std::span<const Correspondence> corr) {
  json arr = json::array();
  for (const auto& c : corr) {
    arr.push_back({{"object_id", c.object_id},
                   {"lidar_peak", c.lidar_peak ? json(*c.lidar_peak) : json(nullptr)},
                   {"camera_peak", c.camera_peak ? json(*c.camera_peak) : json(nullptr)}});
  }
  return arr;
}

inline void write_json(const fs::path& path, const json& j) { detail::write_file(path, j.dump(2) + "\n"); }

inline json read_json(const fs::path& path) {
  try {
    return json::parse(detail::read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, "io", "cannot parse " + path.string() + ": " + e.what());
  }
}

// Scene bundle directory layout.
inline void write_scene_bundle(const fs::path& dir, const Scene& s, std::span<const Correspondence> corr) {
  fs::create_directories(dir);
  write_feature_map(dir / "lidar_features.bevf", s.lidar_map);
  write_feature_map(dir / "lidar_heatmap.bevf", s.lidar_heatmap);
  write_feature_map(dir / "camera_features.bevf", s.camera_map);
  write_feature_map(dir / "camera_heatmap.bevf", s.camera_heatmap);
  write_json(dir / "objects.json", objects_to_json(s));
  write_json(dir / "noise.json", noise_to_json(s.noise, s.calibration));
  write_json(dir / "correspondence.json", correspondence_to_json(corr));
  write_json(dir / "scene.json", {{"seed", s.seed}, {"grid", meta_to_json(s.config.grid)}});
}

// Rebuilds the parts of a Scene needed for alignment and evaluation. Maps come
// back at float32 precision; per-object feature vectors are not stored.
inline Scene read_scene_bundle(const fs::path& dir) {
  FeatureMap lidar = read_feature_map(dir / "lidar_features.bevf");
  FeatureMap lidar_heat = read_feature_map(dir / "lidar_heatmap.bevf");
  FeatureMap camera = read_feature_map(dir / "camera_features.bevf");
  FeatureMap camera_heat = read_feature_map(dir / "camera_heatmap.bevf");
  const json objs = read_json(dir / "objects.json");
  const json noise = read_json(dir / "noise.json");
  const json meta = read_json(dir / "scene.json");

  SceneConfig cfg;
  cfg.grid = lidar.meta();
  cfg.channels = lidar.channels();
  cfg.n_objects = objs.size();
  cfg.seed = meta.value("seed", std::uint64_t{0});

  Scene s{cfg, {}, {}, {}, {}, std::move(lidar), std::move(lidar_heat), std::move(camera), std::move(camera_heat),
          PlanarTransform::identity(), {}, cfg.seed};
  for (const auto& j : objs) {
    SceneObject o;
    o.id = j.at("id").get<std::size_t>();
    o.label = j.at("label").get<int>();
    o.center = {j.at("cx").get<double>(), j.at("cy").get<double>()};
    o.z = j.at("z").get<double>();
    o.w = j.at("w").get<double>();
    o.h = j.at("h").get<double>();
    o.l = j.at("l").get<double>();
    o.yaw = j.at("yaw").get<double>();
    o.velocity = {j.at("vx").get<double>(), j.at("vy").get<double>()};
    o.latent = j.at("latent").get<std::vector<double>>();
    const json& c = j.at("camera");
    s.camera.push_back({{c.at("cx").get<double>(), c.at("cy").get<double>()},
                        {c.at("vx").get<double>(), c.at("vy").get<double>()},
                        c.at("yaw").get<double>()});
    s.objects.push_back(std::move(o));
  }
  s.noise.spec = {noise.at("sigma_t").get<double>(), noise.at("sigma_r").get<double>(), noise.at("lag").get<double>()};
  const json& d = noise.at("drawn");
  s.noise.drawn = {d.at("theta").get<double>(), d.at("tx").get<double>(), d.at("ty").get<double>()};
  const json& cal = noise.at("calibration");
  s.calibration = {cal.at("theta").get<double>(), cal.at("tx").get<double>(), cal.at("ty").get<double>()};
  return s;
}

}  // namespace bevalign::io
