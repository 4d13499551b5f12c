#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "bevalign_cli_test";

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  fs::create_directories(kWork);
  const fs::path log = kWork / "stdout.txt";
  const std::string cmd = std::string(BEVALIGN_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sample(const char* name) { return (fs::path(BEVALIGN_SAMPLES) / name).string(); }

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("run").code, 2);
  EXPECT_EQ(run("oracle").code, 2);
}

TEST(Cli, RunWritesMetricsDeterministically) {
  const fs::path a = kWork / "run_a", b = kWork / "run_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const Result r = run("run --config " + sample("quick.json") + " --out " + a.string());
  ASSERT_EQ(r.code, 0) << r.out;
  ASSERT_EQ(run("run --config " + sample("quick.json") + " --out " + b.string()).code, 0);
  const std::string csv = read_text(a / "metrics.csv");
  EXPECT_EQ(csv, read_text(b / "metrics.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 3);
  EXPECT_TRUE(fs::exists(a / "report.json"));
  EXPECT_TRUE(fs::exists(a / "loss_trace_1.csv"));
  EXPECT_TRUE(fs::exists(a / "heads_1_camera.bevf"));
}

TEST(Cli, RunConfigErrors) {
  const fs::path bad = kWork / "bad.json";
  fs::create_directories(kWork);
  std::ofstream(bad) << R"({"pairing": {"tau_iou": 2.0}})";
  const Result r = run("run --config " + bad.string() + " --out " + (kWork / "bad_out").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("pairing.tau_iou"), std::string::npos) << r.out;
  EXPECT_EQ(run("run --config " + (kWork / "missing.json").string()).code, 2);
  std::ofstream(bad) << "{ not json";
  EXPECT_EQ(run("run --config " + bad.string()).code, 2);
}

TEST(Cli, Gradcheck) {
  const Result ok = run("gradcheck --seed 5 --trials 5");
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("PASS"), std::string::npos);
  const Result bad = run("gradcheck --seed 5 --trials 5 --corrupt-gradient");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("pos_lidar[0]"), std::string::npos);
  EXPECT_EQ(run("gradcheck --trials 0").code, 2);
}

TEST(Cli, OracleKinds) {
  for (const char* kind : {"iou", "knn", "bilinear", "peaks"}) {
    const Result r = run(std::string("oracle --kind ") + kind + " --seed 3 --trials 5");
    EXPECT_EQ(r.code, 0) << kind << ": " << r.out;
  }
  EXPECT_EQ(run("oracle --kind volume").code, 2);
}

TEST(Cli, GenSceneThenAlign) {
  const fs::path scene = kWork / "scene", out = kWork / "aligned";
  fs::remove_all(scene);
  fs::remove_all(out);
  const Result g = run("gen-scene --config " + sample("quick.json") + " --seed 4 --sigma-t 0.3 --out " + scene.string());
  ASSERT_EQ(g.code, 0) << g.out;
  for (const char* f : {"lidar_features.bevf", "camera_features.bevf.json", "objects.json", "noise.json",
                        "lidar_proposals.json", "camera_proposals.json", "pairs.json"}) {
    EXPECT_TRUE(fs::exists(scene / f)) << f;
  }
  const Result a = run("align --config " + sample("quick.json") + " --scene " + scene.string() + " --out " +
                       out.string());
  ASSERT_EQ(a.code, 0) << a.out;
  for (const char* f : {"alignment.json", "pairs.json", "fused.bevf", "fused.bevf.json", "metrics.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto side = nlohmann::json::parse(read_text(out / "fused.bevf.json"));
  EXPECT_EQ(side.at("modality"), "fused");
  EXPECT_TRUE(side.contains("layout"));
  const auto m = nlohmann::json::parse(read_text(out / "metrics.json"));
  EXPECT_GE(m.at("recall_at_1").get<double>(), 0.0);
  EXPECT_LE(m.at("recall_at_1").get<double>(), 1.0);
}

TEST(Cli, AlignRuntimeFailures) {
  const Result missing = run("align --scene " + (kWork / "no_such_scene").string() + " --out " +
                             (kWork / "x").string());
  EXPECT_EQ(missing.code, 3) << missing.out;
  EXPECT_NE(missing.out.find("error"), std::string::npos);
}
