#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kprefine/detect.hpp"
#include "kprefine/image.hpp"
#include "kprefine/keypoint_io.hpp"
#include "support/scenes.hpp"

namespace kprefine {
namespace {

namespace fs = std::filesystem;

int run(const std::string& args, const fs::path& log, const std::string& env = "") {
  const std::string cmd = env + " " + KPREFINE_CLI_PATH + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_scene(const fs::path& dir, const std::string& name, std::uint64_t seed) {
  const testing::ShapeScene scene(seed, 96);
  const auto path = dir / (name + ".png");
  write_png16(path, scene.render(Homography::identity(), {96, 96}, 2));
  return path;
}

TEST(Cli, RefineIsReproducibleAcrossThreadCaps) {
  const auto dir = testing::scratch_dir("cli_refine");
  const auto img = write_scene(dir, "scene", 3);
  const std::string base = "refine " + img.string() + " --seed 5 --n-kpts 200 --out ";
  ASSERT_EQ(run(base + (dir / "a.jsonl").string(), dir / "a.log", "KPREFINE_THREADS=1"), 0);
  ASSERT_EQ(run(base + (dir / "b.jsonl").string(), dir / "b.log", "KPREFINE_THREADS=3"), 0);
  ASSERT_EQ(run(base + (dir / "c.jsonl").string(), dir / "c.log"), 0);
  const auto a = slurp(dir / "a.jsonl");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir / "b.jsonl"));
  EXPECT_EQ(a, slurp(dir / "c.jsonl"));
  EXPECT_LE(read_refined_jsonl(dir / "a.jsonl").size(), 200u);
}

TEST(Cli, RefineDirectoryWritesOneFilePerImage) {
  const auto dir = testing::scratch_dir("cli_refine_dir");
  fs::create_directories(dir / "in");
  write_scene(dir / "in", "one", 1);
  write_scene(dir / "in", "two", 2);
  std::ofstream(dir / "in" / "notes.txt") << "ignored";
  ASSERT_EQ(run("refine " + (dir / "in").string() + " --n-kpts 50 --out " + (dir / "out").string(), dir / "log"), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "one.refined.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "out" / "two.refined.jsonl"));
  EXPECT_FALSE(fs::exists(dir / "out" / "notes.refined.jsonl"));
}

TEST(Cli, InvalidThreadCapRejected) {
  const auto dir = testing::scratch_dir("cli_threads");
  const auto img = write_scene(dir, "scene", 3);
  EXPECT_NE(run("refine " + img.string(), dir / "log", "KPREFINE_THREADS=zero"), 0);
}

TEST(Cli, MissingExternalKeypointsListsWarpIds) {
  const auto dir = testing::scratch_dir("cli_external");
  const auto img = write_scene(dir, "scene", 3);
  fs::create_directories(dir / "kpts");
  for (int k = 0; k < 21; ++k) {
    if (k == 4 || k == 9) continue;
    std::ofstream(dir / "kpts" / external_keypoint_filename("scene", k)) << "{\"x\":10,\"y\":10,\"score\":1}\n";
  }
  const int code = run("refine " + img.string() + " --external-kpts-dir " + (dir / "kpts").string(), dir / "log");
  EXPECT_NE(code, 0);
  const auto log = slurp(dir / "log");
  EXPECT_NE(log.find("4,9"), std::string::npos) << log;
}

TEST(Cli, ExportWarpsDefaults) {
  const auto dir = testing::scratch_dir("cli_export");
  const auto img = write_scene(dir, "scene", 3);
  ASSERT_EQ(run("export-warps " + img.string() + " --out " + (dir / "w").string(), dir / "log"), 0);
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(dir / "w")) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 21u);
  const auto manifest = nlohmann::json::parse(slurp(dir / "w" / "scene.warps.json"));
  EXPECT_EQ(manifest.at("warps").size(), 21u);
}

TEST(Cli, UnknownDetectorIsAnError) {
  const auto dir = testing::scratch_dir("cli_detector");
  const auto img = write_scene(dir, "scene", 3);
  EXPECT_NE(run("refine " + img.string() + " --detector sift", dir / "log"), 0);
}

void write_points(const fs::path& p, const std::vector<Point2>& pts) {
  std::ofstream out(p);
  for (Point2 q : pts) out << "{\"x\":" << format_double(q.x) << ",\"y\":" << format_double(q.y) << "}\n";
}

TEST(Cli, EvalFlagsBadPairsAndEvaluatesTheRest) {
  const auto dir = testing::scratch_dir("cli_eval");
  write_points(dir / "a.jsonl", {{10, 10}, {20, 30}, {40, 5}});
  std::ofstream(dir / "H_id") << "1 0 0\n0 1 0\n0 0 1\n";
  std::ofstream(dir / "H_sing") << "1 2 0\n2 4 0\n0 0 1\n";
  std::ofstream(dir / "pairs.json") << R"({"pairs": [
    {"name": "identity", "kpts_a": "a.jsonl", "kpts_b": "a.jsonl", "homography": "H_id", "size_a": [64, 64], "size_b": [64, 64]},
    {"name": "singular", "kpts_a": "a.jsonl", "kpts_b": "a.jsonl", "homography": "H_sing", "size_a": [64, 64], "size_b": [64, 64]}
  ]})";
  ASSERT_EQ(run("eval " + (dir / "pairs.json").string() + " --out " + (dir / "out").string(), dir / "log"), 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "out" / "eval_summary.json"));
  EXPECT_EQ(summary.at("pairs"), 2);
  EXPECT_EQ(summary.at("evaluated"), 1);
  ASSERT_EQ(summary.at("failed").size(), 1u);
  EXPECT_EQ(summary.at("failed")[0].at("pair"), "singular");
  EXPECT_EQ(summary.at("mean").at("1").at("repeatability").get<double>(), 1.0);
  EXPECT_TRUE(summary.at("mean").at("1").at("mma").is_null());
  const auto csv = slurp(dir / "out" / "eval.csv");
  EXPECT_NE(csv.find("\"identity\",1,ok,1,1,,,3,3,3,3,"), std::string::npos) << csv;
  EXPECT_NE(csv.find("\"singular\",,error"), std::string::npos) << csv;
}

TEST(Cli, EvalEmptyManifest) {
  const auto dir = testing::scratch_dir("cli_eval_empty");
  std::ofstream(dir / "pairs.json") << R"({"pairs": []})";
  ASSERT_EQ(run("eval " + (dir / "pairs.json").string() + " --out " + (dir / "out").string(), dir / "log"), 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "out" / "eval_summary.json"));
  EXPECT_EQ(summary.at("pairs"), 0);
  EXPECT_TRUE(summary.at("mean").at("1").at("repeatability").is_null());
}

TEST(Cli, StatsConcatenatesFiles) {
  const auto dir = testing::scratch_dir("cli_stats");
  std::ofstream(dir / "a.jsonl") << R"({"x":1,"y":1,"robustness":21,"deviation":0.5,"sigma":0.08,"alpha":0.5,"n_support":21})"
                                 << "\n";
  std::ofstream(dir / "b.jsonl") << R"({"x":2,"y":2,"robustness":3,"deviation":2.5,"sigma":0.4,"alpha":0.5,"n_support":3})"
                                 << "\n";
  ASSERT_EQ(run("stats " + (dir / "a.jsonl").string() + " " + (dir / "b.jsonl").string() + " --out " +
                    (dir / "out").string(),
                dir / "log"),
            0);
  const auto rob = slurp(dir / "out" / "robustness_hist.csv");
  EXPECT_EQ(rob.rfind("filter,filter_value,bin_lower,count\n", 0), 0u);
  // No deviation cap: both keypoints, one at 3 and one at 21.
  EXPECT_NE(rob.find(",inf,3,1\n"), std::string::npos) << rob;
  EXPECT_NE(rob.find(",inf,21,1\n"), std::string::npos) << rob;
  // Deviation cap 1: only the first.
  EXPECT_NE(rob.find(",1,21,1\n"), std::string::npos) << rob;
  EXPECT_EQ(rob.find(",1,3,1\n"), std::string::npos) << rob;
  EXPECT_TRUE(fs::exists(dir / "out" / "deviation_hist.csv"));

  EXPECT_NE(run("stats " + (dir / "missing.jsonl").string() + " --out " + (dir / "o2").string(), dir / "log2"), 0);
}

}  // namespace
}  // namespace kprefine
