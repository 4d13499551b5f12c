// bevalign command-line harness.
//
//   bevalign run --config exp.json [--out DIR] [--seed N]
//   bevalign gradcheck [--seed N] [--trials N]
//   bevalign oracle --kind iou|knn|bilinear|peaks [--seed N] [--trials N]
//   bevalign gen-scene [--config exp.json] [--seed N] --out DIR
//   bevalign align --scene DIR [--lidar-head F --camera-head F] --out DIR
//
// Exit codes: 0 success, 1 check failed, 2 usage/config error, 3 runtime failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bevalign/bevalign.hpp"

namespace {

namespace fs = std::filesystem;
using namespace bevalign;

constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

ExperimentConfig config_or_default(const std::string& path) {
  if (path.empty()) return config_from_json(nlohmann::json::object());
  return load_config(path);
}

int cmd_run(const std::string& config_path, const std::optional<std::string>& out,
            const std::optional<std::uint64_t>& seed) {
  ExperimentConfig cfg = load_config(config_path);
  if (out) cfg.output_dir = *out;
  if (seed) cfg.seed = *seed;
  const RunReport report = run_experiment(cfg);
  write_run_outputs(report, cfg.output_dir);
  std::cout << metrics_csv(report);
  std::cout << "wrote " << (fs::path(cfg.output_dir) / "metrics.csv").string() << " and report.json\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t trials, bool corrupt) {
  if (trials == 0) {
    std::cerr << "gradcheck: --trials must be >= 1\n";
    return kExitUsage;
  }
  const GradcheckReport rep = gradcheck(seed, trials, 10, 8, corrupt);
  std::cout << "gradcheck: " << rep.trials << " trials x 2 modes, " << rep.partials
            << " partials, max relative error " << rep.max_rel_error << " (tolerance " << kGradcheckTol << ")\n";
  if (!rep.pass) {
    std::cout << "FAIL worst case: seed " << rep.worst_seed << " partial " << rep.worst_partial << "\n";
    return kExitCheckFailed;
  }
  std::cout << "PASS\n";
  return 0;
}

int cmd_oracle(const std::string& kind, std::uint64_t seed, std::size_t trials) {
  oracle::Report rep;
  if (kind == "iou") {
    rep = oracle::check_iou(seed, trials);
  } else if (kind == "knn") {
    rep = oracle::check_knn(seed, trials);
  } else if (kind == "bilinear") {
    rep = oracle::check_bilinear(seed, trials);
  } else if (kind == "peaks") {
    rep = oracle::check_peaks(seed, trials);
  } else {
    std::cerr << "oracle: unknown kind '" << kind << "' (expected iou, knn, bilinear or peaks)\n";
    return kExitUsage;
  }
  std::cout << "oracle " << kind << ": " << rep.checked << " trials, max error " << rep.max_error << "\n";
  if (!rep.pass) {
    std::cout << rep.first_mismatch.dump() << "\n";
    return kExitCheckFailed;
  }
  std::cout << "PASS\n";
  return 0;
}

int cmd_gen_scene(const std::string& config_path, std::uint64_t seed, const std::string& out, double sigma_t,
                  double sigma_r, double lag) {
  const ExperimentConfig cfg = config_or_default(config_path);
  SceneConfig sc = cfg.scene;
  sc.seed = seed;
  Rng rng(hash64(seed, 0x6E6F697365ull));
  const Scene scene = apply_noise(gen_scene(sc), {sigma_t, sigma_r, lag}, rng);
  const auto lidar = extract_instances(scene.lidar_map, scene.lidar_heatmap, cfg.instance);
  const auto camera = extract_instances(scene.camera_map, scene.camera_heatmap, cfg.instance);
  io::write_scene_bundle(out, scene, correspondence(scene, lidar, camera));
  std::vector<Proposal> lp, cp;
  for (const auto& i : lidar) lp.push_back(i.proposal);
  for (const auto& i : camera) cp.push_back(i.proposal);
  io::write_json(fs::path(out) / "lidar_proposals.json", io::proposals_to_json(lp));
  io::write_json(fs::path(out) / "camera_proposals.json", io::proposals_to_json(cp));
  io::write_json(fs::path(out) / "pairs.json", io::pairset_to_json(build_pairs(lidar, camera, cfg.pairing)));
  std::cout << "scene " << seed << ": " << scene.objects.size() << " objects, " << lidar.size() << " lidar / "
            << camera.size() << " camera instances -> " << out << "\n";
  return 0;
}

int cmd_align(const std::string& config_path, const std::string& scene_dir, const std::string& lidar_head,
              const std::string& camera_head, const std::string& out) {
  const ExperimentConfig cfg = config_or_default(config_path);
  const Scene scene = io::read_scene_bundle(scene_dir);
  const auto lidar = extract_instances(scene.lidar_map, scene.lidar_heatmap, cfg.instance);
  const auto camera = extract_instances(scene.camera_map, scene.camera_heatmap, cfg.instance);
  const PairSet pairs = build_pairs(lidar, camera, cfg.pairing);
  const auto samples = training_samples(lidar, camera, pairs);

  HeadPair heads;
  if (!lidar_head.empty() || !camera_head.empty()) {
    if (lidar_head.empty() || camera_head.empty()) {
      throw ConfigError("--lidar-head/--camera-head", "both head files are required together");
    }
    heads = {io::read_head(lidar_head), io::read_head(camera_head)};
  } else {
    // No heads given: fit them on this scene's own pairs.
    heads = train_heads(samples, cfg.training).heads;
  }

  PipelineOutputs po;
  po.lidar = lidar;
  po.camera = camera;
  po.pairs = pairs;
  po.alignment = align_scene(lidar, camera, &heads, cfg.align);
  po.mean_loss = mean_alignment_loss(samples, heads, cfg.training).mean_loss;
  const Metrics m = eval_alignment(scene, po);
  const FeatureMap fused = fuse(scene.lidar_map, scene.camera_map, po.alignment, lidar, camera);

  fs::create_directories(out);
  io::write_json(fs::path(out) / "alignment.json", io::alignment_to_json(po.alignment));
  io::write_json(fs::path(out) / "pairs.json", io::pairset_to_json(pairs));
  io::write_feature_map(fs::path(out) / "fused.bevf", fused, fused_layout(scene.lidar_map, scene.camera_map));
  const auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  io::write_json(fs::path(out) / "metrics.json",
                 {{"recall_at_1", m.recall_at_1},
                  {"mean_align_loss", num(m.mean_align_loss)},
                  {"center_err_before", m.mean_center_error_before},
                  {"center_err_after", m.mean_center_error_after},
                  {"n_pos", m.positive_pair_count},
                  {"n_neg", m.negative_pair_count}});
  std::cout << "recall@1 " << m.recall_at_1 << " over " << m.evaluated << " lidar instances -> " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BEV instance alignment engine"};
  app.require_subcommand(1);

  std::string config_path, out_dir, kind, scene_dir, lidar_head, camera_head;
  std::uint64_t seed = 1;
  std::size_t trials = 100;
  bool corrupt = false;
  double sigma_t = 0.0, sigma_r = 0.0, lag = 0.0;

  auto* run = app.add_subcommand("run", "run the full pipeline over a noise grid");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  auto* run_out = run->add_option("--out", out_dir, "output directory (overrides config)");
  auto* run_seed = run->add_option("--seed", seed, "base seed (overrides config)");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the InfoNCE gradients");
  grad->add_option("--seed", seed, "base seed");
  grad->add_option("--trials", trials, "number of random instances");
  grad->add_flag("--corrupt-gradient", corrupt, "perturb one analytic partial (negative control)");

  auto* orc = app.add_subcommand("oracle", "compare a module against its brute-force oracle");
  orc->add_option("--kind", kind, "iou | knn | bilinear | peaks")->required();
  orc->add_option("--seed", seed, "seed");
  orc->add_option("--trials", trials, "number of trials");

  auto* gen = app.add_subcommand("gen-scene", "write one synthetic scene bundle");
  gen->add_option("--config", config_path, "experiment config (JSON)");
  gen->add_option("--seed", seed, "scene seed");
  gen->add_option("--out", out_dir, "bundle directory")->required();
  gen->add_option("--sigma-t", sigma_t, "spatial translation noise (m)");
  gen->add_option("--sigma-r", sigma_r, "spatial rotation noise (rad)");
  gen->add_option("--lag", lag, "camera lag (s)");

  auto* al = app.add_subcommand("align", "align and fuse an existing scene bundle");
  al->add_option("--config", config_path, "experiment config (JSON)");
  al->add_option("--scene", scene_dir, "scene bundle directory")->required();
  al->add_option("--lidar-head", lidar_head, "LiDAR projection head (.bevf)");
  al->add_option("--camera-head", camera_head, "camera projection head (.bevf)");
  al->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*run) {
      return cmd_run(config_path, *run_out ? std::optional(out_dir) : std::nullopt,
                     *run_seed ? std::optional(seed) : std::nullopt);
    }
    if (*grad) return cmd_gradcheck(seed, trials, corrupt);
    if (*orc) return cmd_oracle(kind, seed, trials);
    if (*gen) return cmd_gen_scene(config_path, seed, out_dir, sigma_t, sigma_r, lag);
    if (*al) return cmd_align(config_path, scene_dir, lidar_head, camera_head, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error [" << e.module() << "]: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
