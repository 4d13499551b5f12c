#pragma once

// End-to-end experiment harness: configuration, the per-scene pipeline
// (scene -> noise -> instances -> pairs), head training on the even-indexed
// scenes, and evaluation of three alignment variants on the odd-indexed ones.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bevalign/alignfuse.hpp"
#include "bevalign/contrastive.hpp"
#include "bevalign/error.hpp"
#include "bevalign/grid.hpp"
#include "bevalign/instance.hpp"
#include "bevalign/io.hpp"
#include "bevalign/pairing.hpp"
#include "bevalign/scenesim.hpp"
#include "bevalign/util.hpp"

namespace bevalign {

inline constexpr const char* kVersion = "0.3.0";

// Config problems carry the offending field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct ExperimentConfig {
  SceneConfig scene;
  InstanceConfig instance;
  PairingConfig pairing;
  TrainingConfig training;
  AlignConfig align;
  std::vector<NoiseSpec> noise_points;
  std::size_t n_scenes = 20;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
};

namespace detail {

using json = nlohmann::json;

template <typename T>
void read_field(const json& obj, const std::string& path, const char* key, T& dst) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + "." + key, std::string("wrong type: ") + e.what());
  }
}

inline const json& section(const json& root, const char* key, const json& empty) {
  if (!root.contains(key)) return empty;
  const json& s = root.at(key);
  if (!s.is_object()) throw ConfigError(key, "must be an object");
  return s;
}

inline void check(bool ok, const std::string& field, const std::string& msg) {
  if (!ok) throw ConfigError(field, msg);
}

inline std::vector<double> number_list(const json& obj, const std::string& path, const char* key,
                                       std::vector<double> fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_array()) throw ConfigError(path + "." + key, "must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError(path + "." + key, "must be an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& root) {
  using detail::check;
  using detail::read_field;
  using json = nlohmann::json;
  if (!root.is_object()) throw ConfigError("", "config root must be an object");
  static const json empty = json::object();
  const std::vector<std::string> known = {"grid", "scene", "instance", "pairing", "loss", "training",
                                          "align", "noise_grid", "noise_points", "n_scenes", "seed", "output_dir"};
  for (const auto& [key, _] : root.items()) {
    check(std::find(known.begin(), known.end(), key) != known.end(), key, "unknown field");
  }

  ExperimentConfig cfg;
  {
    const json& g = detail::section(root, "grid", empty);
    double x_min = -54, x_max = 54, y_min = -54, y_max = 54, res = 0.75;
    read_field(g, "grid", "x_min", x_min);
    read_field(g, "grid", "x_max", x_max);
    read_field(g, "grid", "y_min", y_min);
    read_field(g, "grid", "y_max", y_max);
    read_field(g, "grid", "resolution", res);
    try {
      cfg.scene.grid = GridMeta(x_min, x_max, y_min, y_max, res);
    } catch (const Error& e) {
      throw ConfigError("grid", e.what());
    }
  }
  {
    const json& s = detail::section(root, "scene", empty);
    auto& sc = cfg.scene;
    read_field(s, "scene", "channels", sc.channels);
    read_field(s, "scene", "n_objects", sc.n_objects);
    read_field(s, "scene", "latent_dim", sc.latent_dim);
    read_field(s, "scene", "feature_noise", sc.feature_noise);
    read_field(s, "scene", "bump_sigma", sc.bump_sigma);
    read_field(s, "scene", "bump_radius", sc.bump_radius);
    read_field(s, "scene", "cluster_radius", sc.cluster_radius);
    read_field(s, "scene", "min_separation", sc.min_separation);
    read_field(s, "scene", "max_speed", sc.max_speed);
    read_field(s, "scene", "static_fraction", sc.static_fraction);
    read_field(s, "scene", "modality_seed", sc.modality_seed);
    check(sc.n_objects >= 1, "scene.n_objects", "must be >= 1");
    check(sc.channels >= 1, "scene.channels", "must be >= 1");
    check(sc.feature_noise >= 0, "scene.feature_noise", "must be >= 0");
    try {
      sc.validate();
    } catch (const Error& e) {
      throw ConfigError("scene", e.what());
    }
  }
  {
    const json& s = detail::section(root, "instance", empty);
    read_field(s, "instance", "kernel", cfg.instance.kernel);
    read_field(s, "instance", "score_thresh", cfg.instance.score_thresh);
    read_field(s, "instance", "max_n", cfg.instance.max_n);
    read_field(s, "instance", "yaw_aware", cfg.instance.yaw_aware);
    check(cfg.instance.kernel >= 3 && cfg.instance.kernel % 2 == 1, "instance.kernel", "must be odd and >= 3");
    check(cfg.instance.score_thresh >= 0 && cfg.instance.score_thresh <= 1, "instance.score_thresh",
          "must lie in [0, 1]");
  }
  {
    const json& s = detail::section(root, "pairing", empty);
    read_field(s, "pairing", "tau_iou", cfg.pairing.tau_iou);
    read_field(s, "pairing", "K", cfg.pairing.k);
    std::string anchor = "camera";
    read_field(s, "pairing", "anchor", anchor);
    check(anchor == "camera" || anchor == "lidar", "pairing.anchor", "must be \"camera\" or \"lidar\"");
    cfg.pairing.anchor = anchor == "camera" ? NeighborAnchor::camera : NeighborAnchor::lidar;
    check(cfg.pairing.tau_iou > 0 && cfg.pairing.tau_iou <= 1, "pairing.tau_iou", "must lie in (0, 1]");
    check(cfg.pairing.k >= 1, "pairing.K", "must be >= 1");
  }
  {
    const json& s = detail::section(root, "loss", empty);
    std::string mode = "dot";
    read_field(s, "loss", "mode", mode);
    check(mode == "dot" || mode == "cosine", "loss.mode", "must be \"dot\" or \"cosine\"");
    cfg.training.loss.mode = mode == "dot" ? SimilarityMode::dot : SimilarityMode::cosine;
    read_field(s, "loss", "temperature", cfg.training.loss.temperature);
    read_field(s, "loss", "include_positive_in_denominator", cfg.training.loss.include_positive_in_denominator);
    check(cfg.training.loss.temperature > 0, "loss.temperature", "must be > 0");
  }
  {
    const json& s = detail::section(root, "training", empty);
    read_field(s, "training", "steps", cfg.training.steps);
    read_field(s, "training", "step_size", cfg.training.step_size);
    read_field(s, "training", "embed_dim", cfg.training.embed_dim);
    read_field(s, "training", "seed", cfg.training.seed);
    read_field(s, "training", "normalize_inputs", cfg.training.normalize_inputs);
    check(cfg.training.step_size > 0, "training.step_size", "must be > 0");
    check(cfg.training.embed_dim >= 1, "training.embed_dim", "must be >= 1");
  }
  {
    const json& s = detail::section(root, "align", empty);
    std::string sim = "cosine";
    read_field(s, "align", "similarity", sim);
    check(sim == "dot" || sim == "cosine", "align.similarity", "must be \"dot\" or \"cosine\"");
    cfg.align.similarity = sim == "dot" ? SimilarityMode::dot : SimilarityMode::cosine;
  }
  cfg.align.k = cfg.pairing.k;
  cfg.align.normalize_inputs = cfg.training.normalize_inputs;

  if (root.contains("noise_points")) {
    const json& pts = root.at("noise_points");
    check(pts.is_array(), "noise_points", "must be an array");
    check(!pts.empty(), "noise_points", "must not be empty");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const std::string path = "noise_points[" + std::to_string(i) + "]";
      check(pts[i].is_object(), path, "must be an object");
      NoiseSpec n;
      read_field(pts[i], path, "sigma_t", n.sigma_t);
      read_field(pts[i], path, "sigma_r", n.sigma_r);
      read_field(pts[i], path, "lag", n.lag);
      check(n.sigma_t >= 0 && n.sigma_r >= 0 && n.lag >= 0, path, "noise values must be >= 0");
      cfg.noise_points.push_back(n);
    }
  } else {
    const json& g = detail::section(root, "noise_grid", empty);
    const auto st = detail::number_list(g, "noise_grid", "sigma_t", {0.0});
    const auto sr = detail::number_list(g, "noise_grid", "sigma_r", {0.0});
    const auto lag = detail::number_list(g, "noise_grid", "lag", {0.0});
    check(!st.empty(), "noise_grid.sigma_t", "must not be empty");
    check(!sr.empty(), "noise_grid.sigma_r", "must not be empty");
    check(!lag.empty(), "noise_grid.lag", "must not be empty");
    for (double a : st) {
      for (double b : sr) {
        for (double c : lag) {
          check(a >= 0 && b >= 0 && c >= 0, "noise_grid", "noise values must be >= 0");
          cfg.noise_points.push_back({a, b, c});
        }
      }
    }
  }

  read_field(root, "", "n_scenes", cfg.n_scenes);
  read_field(root, "", "seed", cfg.seed);
  read_field(root, "", "output_dir", cfg.output_dir);
  check(cfg.n_scenes >= 1, "n_scenes", "must be >= 1");
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError("", "cannot open config file " + path.string());
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", std::string("parse error: ") + e.what());
  }
  return config_from_json(root);
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  using json = nlohmann::json;
  json noise = json::array();
  for (const auto& n : c.noise_points) noise.push_back({{"sigma_t", n.sigma_t}, {"sigma_r", n.sigma_r}, {"lag", n.lag}});
  const auto& s = c.scene;
  return {
      {"grid", io::meta_to_json(s.grid)},
      {"scene", {{"channels", s.channels}, {"n_objects", s.n_objects}, {"latent_dim", s.latent_dim},
                 {"feature_noise", s.feature_noise}, {"bump_sigma", s.bump_sigma}, {"bump_radius", s.bump_radius},
                 {"cluster_radius", s.cluster_radius}, {"min_separation", s.min_separation},
                 {"max_speed", s.max_speed}, {"static_fraction", s.static_fraction},
                 {"modality_seed", s.modality_seed}}},
      {"instance", {{"kernel", c.instance.kernel}, {"score_thresh", c.instance.score_thresh},
                    {"max_n", c.instance.max_n}, {"yaw_aware", c.instance.yaw_aware}}},
      {"pairing", {{"tau_iou", c.pairing.tau_iou}, {"K", c.pairing.k},
                   {"anchor", c.pairing.anchor == NeighborAnchor::camera ? "camera" : "lidar"}}},
      {"loss", {{"mode", c.training.loss.mode == SimilarityMode::dot ? "dot" : "cosine"},
                {"temperature", c.training.loss.temperature},
                {"include_positive_in_denominator", c.training.loss.include_positive_in_denominator}}},
      {"training", {{"steps", c.training.steps}, {"step_size", c.training.step_size},
                    {"embed_dim", c.training.embed_dim}, {"seed", c.training.seed},
                    {"normalize_inputs", c.training.normalize_inputs}}},
      {"align", {{"similarity", c.align.similarity == SimilarityMode::dot ? "dot" : "cosine"}}},
      {"noise_points", noise},
      {"n_scenes", c.n_scenes},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
  };
}

// One scene pushed through generation, noise, extraction and pairing.
struct SceneRun {
  std::size_t index = 0;
  Scene scene;
  std::vector<Instance> lidar;
  std::vector<Instance> camera;
  PairSet pairs;
};

inline std::vector<TrainingSample> training_samples(std::span<const Instance> lidar, std::span<const Instance> camera,
                                                    const PairSet& pairs) {
  std::vector<TrainingSample> out;
  out.reserve(pairs.positives.size());
  for (std::size_t p = 0; p < pairs.positives.size(); ++p) {
    const auto [i, j] = pairs.positives[p];
    TrainingSample s;
    s.lidar = lidar[i].roi.values;
    s.camera = camera[j].roi.values;
    for (std::size_t n : pairs.negatives[p]) s.negatives.push_back(camera[n].roi.values);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::uint64_t scene_seed(std::uint64_t base, std::size_t index) { return hash64(base, index); }

// Even scene indices train, odd ones are held out. A single-scene run uses
// its one scene for both.
inline bool is_training_scene(std::size_t index, std::size_t n_scenes) { return n_scenes == 1 || index % 2 == 0; }
inline bool is_eval_scene(std::size_t index, std::size_t n_scenes) { return n_scenes == 1 || index % 2 == 1; }

inline SceneRun run_scene(const ExperimentConfig& cfg, std::size_t index, const NoiseSpec& noise) {
  SceneConfig sc = cfg.scene;
  sc.seed = scene_seed(cfg.seed, index);
  Rng noise_rng(hash64(sc.seed, 0x6E6F697365ull));
  SceneRun run;
  run.index = index;
  run.scene = apply_noise(gen_scene(sc), noise, noise_rng);
  run.lidar = extract_instances(run.scene.lidar_map, run.scene.lidar_heatmap, cfg.instance);
  run.camera = extract_instances(run.scene.camera_map, run.scene.camera_heatmap, cfg.instance);
  run.pairs = build_pairs(run.lidar, run.camera, cfg.pairing);
  return run;
}

enum class Variant { naive, untrained, trained };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::naive: return "naive";
    case Variant::untrained: return "untrained";
    case Variant::trained: return "trained";
  }
  return "unknown";
}

inline PipelineOutputs evaluate_variant(const SceneRun& run, Variant variant, const HeadPair& heads,
                                        const ExperimentConfig& cfg) {
  PipelineOutputs out;
  out.lidar = run.lidar;
  out.camera = run.camera;
  out.pairs = run.pairs;
  AlignConfig ac = cfg.align;
  if (variant == Variant::naive) {
    ac.selection = Selection::nearest;
    out.alignment = align_scene(run.lidar, run.camera, nullptr, ac);
  } else {
    out.alignment = align_scene(run.lidar, run.camera, &heads, ac);
    const auto samples = training_samples(run.lidar, run.camera, run.pairs);
    out.mean_loss = mean_alignment_loss(samples, heads, cfg.training).mean_loss;
  }
  return out;
}

struct Summary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;  // finite samples
};

inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  for (double x : xs) {
    if (std::isfinite(x)) {
      s.mean += x;
      ++s.count;
    }
  }
  if (s.count == 0) return {NAN, NAN, 0};
  s.mean /= static_cast<double>(s.count);
  for (double x : xs) {
    if (std::isfinite(x)) s.std += (x - s.mean) * (x - s.mean);
  }
  s.std = std::sqrt(s.std / static_cast<double>(s.count));
  return s;
}

struct VariantReport {
  Variant variant = Variant::naive;
  Summary recall, loss, err_before, err_after;
  std::size_t n_pos = 0, n_neg = 0, n_scenes = 0;
  std::vector<Metrics> per_scene;
};

struct NoisePointReport {
  NoiseSpec noise;
  std::vector<VariantReport> variants;  // naive, untrained, trained
  std::vector<TraceRow> trace;
  HeadPair trained;
  std::size_t train_pairs = 0;
};

struct RunReport {
  ExperimentConfig config;
  std::vector<NoisePointReport> points;
  double wall_seconds = 0.0;
};

inline NoisePointReport run_noise_point(const ExperimentConfig& cfg, const NoiseSpec& noise) {
  std::vector<SceneRun> runs(cfg.n_scenes);
  parallel_for(cfg.n_scenes, [&](std::size_t i) { runs[i] = run_scene(cfg, i, noise); });

  std::vector<TrainingSample> train;
  std::size_t d_in = 0;
  for (const auto& r : runs) {
    if (!r.lidar.empty()) d_in = r.lidar.front().roi.values.size();
    if (!is_training_scene(r.index, cfg.n_scenes)) continue;
    auto s = training_samples(r.lidar, r.camera, r.pairs);
    train.insert(train.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }

  NoisePointReport rep;
  rep.noise = noise;
  rep.train_pairs = train.size();
  const TrainResult trained = train_heads(train, cfg.training);
  rep.trace = trained.trace;
  rep.trained = trained.heads;
  const HeadPair untrained = init_heads(d_in, cfg.training);

  for (Variant v : {Variant::naive, Variant::untrained, Variant::trained}) {
    const HeadPair& heads = v == Variant::trained ? trained.heads : untrained;
    VariantReport vr;
    vr.variant = v;
    std::vector<std::size_t> eval;
    for (const auto& r : runs) {
      if (is_eval_scene(r.index, cfg.n_scenes)) eval.push_back(r.index);
    }
    vr.per_scene.resize(eval.size());
    parallel_for(eval.size(), [&](std::size_t e) {
      const SceneRun& r = runs[eval[e]];
      vr.per_scene[e] = eval_alignment(r.scene, evaluate_variant(r, v, heads, cfg));
    });
    std::vector<double> rec, loss, eb, ea;
    for (const auto& m : vr.per_scene) {
      rec.push_back(m.recall_at_1);
      loss.push_back(m.mean_align_loss);
      eb.push_back(m.mean_center_error_before);
      ea.push_back(m.mean_center_error_after);
      vr.n_pos += m.positive_pair_count;
      vr.n_neg += m.negative_pair_count;
    }
    vr.recall = summarize(rec);
    vr.loss = summarize(loss);
    vr.err_before = summarize(eb);
    vr.err_after = summarize(ea);
    vr.n_scenes = eval.size();
    rep.variants.push_back(std::move(vr));
  }
  return rep;
}

inline RunReport run_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport report;
  report.config = cfg;
  for (const auto& n : cfg.noise_points) report.points.push_back(run_noise_point(cfg, n));
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

inline std::string format_number(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string metrics_csv(const RunReport& r) {
  std::ostringstream os;
  os << "sigma_t,sigma_r,lag,variant,recall_at_1,mean_loss,center_err_before,center_err_after,n_pos,n_neg,n_scenes\n";
  for (const auto& p : r.points) {
    for (const auto& v : p.variants) {
      os << format_number(p.noise.sigma_t) << ',' << format_number(p.noise.sigma_r) << ','
         << format_number(p.noise.lag) << ',' << to_string(v.variant) << ',' << format_number(v.recall.mean) << ','
         << format_number(v.loss.mean) << ',' << format_number(v.err_before.mean) << ','
         << format_number(v.err_after.mean) << ',' << v.n_pos << ',' << v.n_neg << ',' << v.n_scenes << '\n';
    }
  }
  return os.str();
}

inline std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream os;
  os << "step,mean_loss,mean_pos_sim,mean_neg_sim\n";
  for (const auto& t : trace) {
    os << t.step << ',' << format_number(t.mean_loss) << ',' << format_number(t.mean_pos_sim) << ','
       << format_number(t.mean_neg_sim) << '\n';
  }
  return os.str();
}

inline nlohmann::json report_json(const RunReport& r) {
  using json = nlohmann::json;
  const auto summary = [](const Summary& s) {
    return json{{"mean", std::isfinite(s.mean) ? json(s.mean) : json(nullptr)},
                {"std", std::isfinite(s.std) ? json(s.std) : json(nullptr)}};
  };
  json points = json::array();
  for (std::size_t k = 0; k < r.points.size(); ++k) {
    const auto& p = r.points[k];
    json variants = json::array();
    for (const auto& v : p.variants) {
      variants.push_back({{"variant", to_string(v.variant)},
                          {"recall_at_1", summary(v.recall)},
                          {"mean_loss", summary(v.loss)},
                          {"center_err_before", summary(v.err_before)},
                          {"center_err_after", summary(v.err_after)},
                          {"n_pos", v.n_pos},
                          {"n_neg", v.n_neg},
                          {"n_scenes", v.n_scenes}});
    }
    points.push_back({{"sigma_t", p.noise.sigma_t},
                      {"sigma_r", p.noise.sigma_r},
                      {"lag", p.noise.lag},
                      {"train_pairs", p.train_pairs},
                      {"initial_loss", p.trace.front().mean_loss},
                      {"final_loss", p.trace.back().mean_loss},
                      {"loss_trace", "loss_trace_" + std::to_string(k) + ".csv"},
                      {"variants", variants}});
  }
  return {{"version", kVersion},
          {"wall_clock_seconds", r.wall_seconds},
          {"config", config_to_json(r.config)},
          {"noise_points", points}};
}

inline void write_run_outputs(const RunReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::detail::write_file(dir / "metrics.csv", metrics_csv(r));
  io::write_json(dir / "report.json", report_json(r));
  for (std::size_t k = 0; k < r.points.size(); ++k) {
    io::detail::write_file(dir / ("loss_trace_" + std::to_string(k) + ".csv"), trace_csv(r.points[k].trace));
    io::write_head(dir / ("heads_" + std::to_string(k) + "_lidar.bevf"), r.points[k].trained.lidar);
    io::write_head(dir / ("heads_" + std::to_string(k) + "_camera.bevf"), r.points[k].trained.camera);
  }
}

// Central finite-difference check of the InfoNCE gradients.
struct GradcheckReport {
  bool pass = true;
  std::size_t trials = 0;
  std::size_t partials = 0;
  double max_rel_error = 0.0;
  std::uint64_t worst_seed = 0;
  std::string worst_partial;
};

inline constexpr double kGradcheckStep = 1e-6;
inline constexpr double kGradcheckTol = 1e-5;
// Relative error is |a - n| / max(|a|, |n|, kGradcheckFloor).
inline constexpr double kGradcheckFloor = 1e-3;

inline GradcheckReport gradcheck(std::uint64_t seed, std::size_t trials, std::size_t dim = 10, std::size_t k = 8,
                                 bool corrupt = false) {
  BEVALIGN_REQUIRE(trials >= 1, ErrorCode::InvalidConfig, "cli", "trials must be >= 1");
  GradcheckReport rep;
  rep.trials = trials;
  const LossConfig modes[] = {{SimilarityMode::dot, 0.07, false}, {SimilarityMode::cosine, 0.07, false}};
  for (std::size_t t = 0; t < trials; ++t) {
    const std::uint64_t trial_seed = hash64(seed, t);
    Rng rng(trial_seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (const LossConfig& cfg : modes) {
      std::vector<std::vector<double>> vecs(2 + k, std::vector<double>(dim));
      for (auto& v : vecs) {
        for (double& x : v) x = n01(rng);
      }
      const auto eval = [&](const std::vector<std::vector<double>>& vs) {
        std::vector<std::vector<double>> negs(vs.begin() + 2, vs.end());
        return info_nce(vs[0], vs[1], negs, cfg);
      };
      LossReport base = eval(vecs);
      if (corrupt) base.grad_lidar[0] += 1e-2;
      for (std::size_t which = 0; which < vecs.size(); ++which) {
        const std::vector<double>& analytic =
            which == 0 ? base.grad_lidar : which == 1 ? base.grad_camera : base.grad_negs[which - 2];
        for (std::size_t d = 0; d < dim; ++d) {
          auto plus = vecs, minus = vecs;
          plus[which][d] += kGradcheckStep;
          minus[which][d] -= kGradcheckStep;
          const double numeric = (eval(plus).value - eval(minus).value) / (2 * kGradcheckStep);
          const double a = analytic[d];
          const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kGradcheckFloor});
          ++rep.partials;
          if (rel > rep.max_rel_error) {
            rep.max_rel_error = rel;
            rep.worst_seed = trial_seed;
            const std::string name = which == 0 ? "pos_lidar" : which == 1 ? "pos_camera" : "neg" + std::to_string(which - 2);
            rep.worst_partial = std::string(cfg.mode == SimilarityMode::dot ? "dot" : "cosine") + ":d/d" + name +
                                "[" + std::to_string(d) + "]";
          }
        }
      }
    }
  }
  rep.pass = rep.max_rel_error < kGradcheckTol;
  return rep;
}

}  // namespace bevalign
