#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oms/oms.hpp"

namespace oms {
namespace {

namespace fs = std::filesystem;

struct Result {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("oms_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  Result oms(const std::string& args) const {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = std::string(OMS_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  void write(const fs::path& p, const std::string& text) const { std::ofstream(p) << text; }
  std::string path(const std::string& name) const { return (dir / name).string(); }

  static constexpr const char* kScene = R"({
    "spheres": [{"label": "apple", "center": [0, 0, 1], "radius": 0.1},
                {"label": "bowl", "center": [0.3, 0.4, 0.9], "radius": 0.15}],
    "ground_plane_z": 0, "query_label": "apple",
    "intrinsics": {"fx": 120, "fy": 120, "cx": 80, "cy": 60, "width": 160, "height": 120},
    "views": [{"id": "0", "eye": [-1.5, 0, 1], "target": [0, 0, 1], "timestamp": 10},
              {"id": "1", "eye": [0, -1.5, 1.3], "target": [0, 0, 1], "timestamp": 11}],
    "noise_level": 0.05, "seed": 42})";

  static constexpr const char* kDistributionOne = R"(
cluster = 0 0 0 0.7
cluster = 1.5 0 0 0.2
cluster = 0 1.5 0 0.1
noise_sigma = 0.1
training_sizes = 5, 50
n_trials = 20000
)";

  fs::path dir;
};

TEST_F(Cli, RenderThenIngestLocalizesSphere) {
  write(dir / "scene.json", kScene);
  ASSERT_EQ(oms("render-synthetic --scene " + path("scene.json") + " --out " + path("obs")).exit_code, 0);
  const auto r = oms("ingest --views " + path("obs") + " --label apple --store " + path("observations.jsonl"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto records = ObjectMemory(dir / "observations.jsonl").query_observations("apple");
  ASSERT_EQ(records.size(), 1u);
  EXPECT_LT((records[0].location - Vec3(0, 0, 1)).norm(), 0.1);
  EXPECT_EQ(records[0].timestamp, 11);
}

TEST_F(Cli, IngestEmptyDirectoryWarns) {
  fs::create_directories(dir / "empty");
  const auto r = oms("ingest --views " + path("empty") + " --label apple --store " + path("observations.jsonl"));
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  EXPECT_NE(r.out.find("appended 0 records"), std::string::npos);
}

TEST_F(Cli, IngestReportsMalformedFile) {
  write(dir / "scene.json", kScene);
  ASSERT_EQ(oms("render-synthetic --scene " + path("scene.json") + " --out " + path("obs/a")).exit_code, 0);
  fs::resize_file(dir / "obs/a/relevancy_1.f32", 64);
  const auto r = oms("ingest --views " + path("obs") + " --label apple --store " + path("observations.jsonl"));
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.err.find("relevancy_1.f32"), std::string::npos) << r.err;
}

TEST_F(Cli, SimulateFitPlan) {
  write(dir / "dist.conf", "cluster = 0 0 0 0.3333333333333333\ncluster = 2 0 0 0.3333333333333333\n"
                           "cluster = 0 2 0 0.3333333333333334\nnoise_sigma = 0.1\n");
  const std::string store = path("observations.jsonl");
  ASSERT_EQ(oms("simulate --config " + path("dist.conf") + " --n 300 --label keys --store " + store).exit_code, 0);
  const auto fit = oms("fit --store " + store + " --label keys --kmin 1 --kmax 6 --restarts 10 --seed 42 --out " +
                       path("keys.json"));
  ASSERT_EQ(fit.exit_code, 0) << fit.err;
  EXPECT_NE(fit.out.find("K=3 log_likelihood"), std::string::npos) << fit.out;
  EXPECT_TRUE(fs::exists(dir / "model_keys.json"));
  EXPECT_EQ(slurp(dir / "model_keys.json"), slurp(dir / "keys.json"));

  const auto plan = oms("plan --model " + path("keys.json") + " --strategy mode --n 5 --seed 42");
  ASSERT_EQ(plan.exit_code, 0);
  std::istringstream lines(plan.out);
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    std::istringstream xyz(line);
    double x, y, z;
    ASSERT_TRUE(xyz >> x >> y >> z) << line;
    ++count;
  }
  EXPECT_EQ(count, 3);

  const auto a = oms("plan --model " + path("keys.json") + " --strategy sample --n 5 --seed 7");
  const auto b = oms("plan --model " + path("keys.json") + " --strategy sample --n 5 --seed 7");
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '\n'), 5);
}

TEST_F(Cli, FitEdgeCases) {
  const std::string store = path("observations.jsonl");
  EXPECT_NE(oms("fit --store " + store + " --label keys --out " + path("m.json")).exit_code, 0);

  ObjectMemory(dir / "observations.jsonl").append_observation({"keys", Vec3(1, 2, 3), 0, {}});
  const auto one = oms("fit --store " + store + " --label keys --kmin 1 --kmax 1 --out " + path("m.json"));
  ASSERT_EQ(one.exit_code, 0) << one.err;
  const auto m = read_model_file(dir / "m.json");
  EXPECT_EQ(m.components.at(0).mean, Vec3(1, 2, 3));

  const auto bad = oms("fit --store " + store + " --label keys --kmin 2 --kmax 3");
  EXPECT_NE(bad.exit_code, 0);
  EXPECT_NE(bad.err.find("--kmin"), std::string::npos);
}

TEST_F(Cli, PlanMissingOrCorruptModel) {
  EXPECT_NE(oms("plan --model " + path("nope.json")).exit_code, 0);
  write(dir / "bad.json", "{\"label\": 3}");
  EXPECT_NE(oms("plan --model " + path("bad.json")).exit_code, 0);
}

TEST_F(Cli, BenchWritesCsvIndependentOfThreads) {
  write(dir / "bench.conf", kDistributionOne);
  const auto one = oms("bench --config " + path("bench.conf") + " --out " + path("t1.csv") + " --threads 1 --seed 42");
  ASSERT_EQ(one.exit_code, 0) << one.err;
  ASSERT_EQ(oms("bench --config " + path("bench.conf") + " --out " + path("t8.csv") + " --threads 8 --seed 42").exit_code,
            0);
  const auto csv = slurp(dir / "t1.csv");
  EXPECT_EQ(csv, slurp(dir / "t8.csv"));
  EXPECT_TRUE(csv.starts_with("training_size,gmm_accuracy,baseline_accuracy,gmm_ci,baseline_ci\n5,"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(one.out.find("training_size"), std::string::npos);

  ASSERT_EQ(oms("bench --config " + path("bench.conf") + " --out " + path("s.csv") + " --seed 43").exit_code, 0);
  EXPECT_NE(slurp(dir / "s.csv"), csv);
}

TEST_F(Cli, BenchConfigErrorNamesLine) {
  write(dir / "bad.conf", "cluster = 0 0 0 1\nn_trials = lots\n");
  const auto r = oms("bench --config " + path("bad.conf") + " --out " + path("x.csv"));
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "x.csv"));
}

TEST_F(Cli, RequiresSubcommand) { EXPECT_NE(oms("").exit_code, 0); }

}  // namespace
}  // namespace oms
