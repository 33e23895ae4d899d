#include "ikp/cli.hpp"
#include "ikp/io.hpp"
#include "ikp/synth.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace ikp;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ikp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "ikp_cli");
    out_.str("");
    err_.str("");
    return cli::run(args, out_, err_);
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  void write_file(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

  static std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  }

  fs::path dir_;
  std::ostringstream out_;
  std::ostringstream err_;
};

const char* kRandomWalk = R"({"A":[[1]],"b":[0],"G":[[1]],"Q":[[1]],"C":[[1]],"d":[0],"R":[[1]],"x0_mean":[0],"x0_cov":[[0]]})";

}  // namespace

TEST_F(CliTest, SimulateMassSpringDefaults) {
  ASSERT_EQ(run({"simulate", "--seed", "1", "--out", dir_.string()}), cli::kExitOk) << err_.str();
  const auto traj = load_trajectory_csv(path("trajectory.csv"));
  EXPECT_EQ(traj.size(), 6000u);
  EXPECT_DOUBLE_EQ(traj.dt, 0.01);
  EXPECT_EQ(load_trajectory_csv(path("noisy.csv")).size(), 6000u);
  const auto model = model_from_json(read_json(path("model.json")));
  EXPECT_DOUBLE_EQ(model.A(1, 0), -0.000825 / 0.0015 * 0.01);
  EXPECT_TRUE(fs::exists(path("simulate_config.json")));
}

TEST_F(CliTest, SimulateIsByteIdenticalForSameSeed) {
  const auto a = dir_ / "a";
  const auto b = dir_ / "b";
  ASSERT_EQ(run({"simulate", "--kind", "surrogate", "--steps", "300", "--sigma2", "4", "--seed", "9", "--out", a.string()}),
            0);
  ASSERT_EQ(run({"simulate", "--kind", "surrogate", "--steps", "300", "--sigma2", "4", "--seed", "9", "--out", b.string()}),
            0);
  EXPECT_EQ(slurp(a / "trajectory.csv"), slurp(b / "trajectory.csv"));
  EXPECT_EQ(slurp(a / "noisy.csv"), slurp(b / "noisy.csv"));
}

TEST_F(CliTest, ConfigErrorsExitWithTwo) {
  write_file("bad.json", R"({"simulate": {"steps_T": 0}})");
  EXPECT_EQ(run({"simulate", "--config", path("bad.json").string(), "--out", dir_.string()}), cli::kExitConfig);
  EXPECT_EQ(err_.str().rfind("error:", 0), 0u) << err_.str();
  EXPECT_NE(err_.str().find("steps_T"), std::string::npos);

  write_file("broken.json", "{not json");
  EXPECT_EQ(run({"simulate", "--config", path("broken.json").string(), "--out", dir_.string()}), cli::kExitConfig);
  EXPECT_EQ(run({"simulate", "--config", path("missing.json").string(), "--out", dir_.string()}), cli::kExitConfig);
  EXPECT_EQ(run({"frobnicate"}), cli::kExitConfig);
  EXPECT_EQ(run({"simulate", "--kind", "teapot", "--out", dir_.string()}), cli::kExitConfig);
  EXPECT_EQ(err_.str().rfind("error:", 0), 0u);
}

TEST_F(CliTest, FlagOverridesConfigSeed) {
  write_file("c.json", R"({"seed": 5, "simulate": {"kind": "surrogate", "steps": 50}})");
  ASSERT_EQ(run({"simulate", "--config", path("c.json").string(), "--out", (dir_ / "a").string()}), 0);
  ASSERT_EQ(run({"simulate", "--config", path("c.json").string(), "--seed", "5", "--out", (dir_ / "b").string()}), 0);
  ASSERT_EQ(run({"simulate", "--config", path("c.json").string(), "--seed", "6", "--out", (dir_ / "c").string()}), 0);
  EXPECT_EQ(slurp(dir_ / "a" / "trajectory.csv"), slurp(dir_ / "b" / "trajectory.csv"));
  EXPECT_NE(slurp(dir_ / "a" / "trajectory.csv"), slurp(dir_ / "c" / "trajectory.csv"));
  EXPECT_EQ(read_json(dir_ / "c" / "simulate_config.json")["seed"].get<int>(), 6);
}

TEST_F(CliTest, IdentifyFitsAndRejectsShortInput) {
  ASSERT_EQ(run({"simulate", "--kind", "surrogate", "--steps", "300", "--sigma2", "1", "--out", dir_.string()}), 0);
  ASSERT_EQ(run({"identify", "--input", path("noisy.csv").string(), "--state-dim", "2", "--out", dir_.string()}), 0)
      << err_.str();
  const auto model = model_from_json(read_json(path("model.json")));
  EXPECT_EQ(model.state_dim(), 2);
  EXPECT_EQ(model.output_dim(), 3);
  const auto diag = read_json(path("diagnostics.json"));
  EXPECT_GE(diag["loglik_history"].size(), 2u);

  EXPECT_EQ(run({"identify", "--input", path("noisy.csv").string(), "--state-dim", "4", "--train-steps", "20", "--out",
                 dir_.string()}),
            cli::kExitConfig);
  EXPECT_EQ(err_.str().rfind("error:", 0), 0u);
  EXPECT_EQ(run({"identify", "--input", path("noisy.csv").string(), "--state-dim", "two", "--out", dir_.string()}),
            cli::kExitConfig);
}

TEST_F(CliTest, OptimizeZeroGenerationsEchoesRegular) {
  write_file("rw.json", kRandomWalk);
  ASSERT_EQ(run({"optimize", "--model", path("rw.json").string(), "--horizon", "30", "--budget", "5", "--generations",
                 "0", "--out", dir_.string()}),
            0)
      << err_.str();
  const auto j = read_json(path("schedule.json"));
  EXPECT_EQ(j["times"].get<std::vector<int>>(), (std::vector<int>{0, 6, 12, 18, 24}));
  EXPECT_EQ(j["T"].get<int>(), 30);
  EXPECT_DOUBLE_EQ(j["objective"].get<double>(), j["regular_objective"].get<double>());
}

TEST_F(CliTest, OptimizeExhaustive) {
  write_file("rw.json", kRandomWalk);
  ASSERT_EQ(run({"optimize", "--model", path("rw.json").string(), "--horizon", "4", "--budget", "1", "--method",
                 "exhaustive", "--out", dir_.string()}),
            0);
  const auto j = read_json(path("schedule.json"));
  EXPECT_EQ(j["times"].get<std::vector<int>>(), (std::vector<int>{2}));
  EXPECT_NEAR(j["objective"].get<double>(), 22.0 / 3.0, 1e-12);
  EXPECT_EQ(run({"optimize", "--model", path("rw.json").string(), "--horizon", "4", "--budget", "9", "--out",
                 dir_.string()}),
            cli::kExitConfig);
}

TEST_F(CliTest, PredictWritesBeliefAndRejectsMissingRows) {
  write_file("rw.json", kRandomWalk);
  write_file("s.json", R"({"T": 4, "times": [1, 3]})");
  write_file("z.csv", "dt=1\n0.5\n1.5\n2.5\n3.5\n");
  ASSERT_EQ(run({"predict", "--model", path("rw.json").string(), "--schedule", path("s.json").string(),
                 "--measurements", path("z.csv").string(), "--out", dir_.string()}),
            0)
      << err_.str();
  std::ifstream is(path("belief.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 5);

  write_file("short.csv", "dt=1\n0.5\n1.5\n");
  EXPECT_EQ(run({"predict", "--model", path("rw.json").string(), "--schedule", path("s.json").string(),
                 "--measurements", path("short.csv").string(), "--out", dir_.string()}),
            cli::kExitConfig);
  EXPECT_NE(err_.str().find("t=3"), std::string::npos) << err_.str();
}

TEST_F(CliTest, BenchSingleCell) {
  write_file("b.json", R"({"bench": {"sigma2_grid": [4], "budget_fraction_grid": [0.3], "horizon_T": 60,
    "train_steps": 150, "warmup_t0": 10, "replications": 1, "state_dim": 2, "em": {"max_iters": 20},
    "ga": {"population_size": 10, "generations": 5}}})");
  ASSERT_EQ(run({"bench", "--config", path("b.json").string(), "--seed", "3", "--out", dir_.string()}), 0) << err_.str();
  std::ifstream is(path("bench.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 4);
  EXPECT_NE(slurp(path("bench_table.txt")).find("RMWP"), std::string::npos);
}
