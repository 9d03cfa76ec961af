#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("feshbach_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) const {
    const auto p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }

  // Runs the tool; returns the exit status and captures stderr.
  int run(const std::string& args, const std::string& out_name = "out") {
    const auto err = dir_ / "stderr.txt";
    const std::string cmd = std::string(FESHBACH_OPT_PATH) + " " + args + " --out " + (dir_ / out_name).string() +
                            " > " + (dir_ / "stdout.txt").string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    std::ifstream in(err);
    std::stringstream ss;
    ss << in.rdbuf();
    stderr_ = ss.str();
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string slurp(const std::string& rel) const {
    std::ifstream in(dir_ / rel);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
  std::string stderr_;
};

}  // namespace

TEST_F(Cli, EquilibriumWithoutInteractions) {
  ASSERT_EQ(run("equilibrium --config " FESHBACH_SCENARIO_DIR "/equilibrium_noninteracting.ini"), 0) << stderr_;
  const auto j = nlohmann::json::parse(slurp("out/equilibrium.json"));
  EXPECT_NEAR(j["ansatz"]["s"].get<double>(), 0.5, 1e-12);
  EXPECT_NEAR(j["gpe"]["s"].get<double>(), 0.5, 1e-7);
  EXPECT_TRUE(j.contains("config"));
}

TEST_F(Cli, MalformedConfigNamesTheKey) {
  const auto cfg = write("bad.ini", "[equilibrium]\nkappa = 1\nkapa = 2\n");
  EXPECT_EQ(run("equilibrium --config " + cfg), 2);
  EXPECT_NE(stderr_.find("kapa"), std::string::npos) << stderr_;
}

TEST_F(Cli, MissingSectionAndBadFlags) {
  const auto cfg = write("empty.ini", "[physics]\natoms = 10\n");
  EXPECT_EQ(run("cycle --config " + cfg), 2);
  EXPECT_NE(stderr_.find("[cycle]"), std::string::npos) << stderr_;
  EXPECT_EQ(run("cycle --config " + cfg + " --threads 0"), 2);
  EXPECT_EQ(run("frobnicate --config " + cfg), 2);
}

TEST_F(Cli, SynthesizeRejectsZeroMuAndEqualEnds) {
  auto cfg = write("mu0.ini", "[stroke]\nmu = 0\n");
  EXPECT_EQ(run("synthesize --config " + cfg), 2);
  EXPECT_NE(stderr_.find("mu must be > 0"), std::string::npos) << stderr_;
  cfg = write("same.ini", "[stroke]\ns_i = 1.5\ns_f = 1.5\nmu = 1\n");
  EXPECT_EQ(run("synthesize --config " + cfg), 2);
  EXPECT_NE(stderr_.find("s_i and s_f"), std::string::npos) << stderr_;
}

TEST_F(Cli, SynthesizeThenValidateProtocolFile) {
  const auto cfg = write("s.ini",
                         "[physics]\natoms = 1000\n[stroke]\nmu = 0.5\n[solver]\nhold_periods = 1\ndt = 0.002\n");
  ASSERT_EQ(run("synthesize --config " + cfg), 0) << stderr_;
  const auto j = nlohmann::json::parse(slurp("out/synthesize.json"));
  ASSERT_EQ(j["strokes"].size(), 1u);
  EXPECT_NEAR(j["strokes"][0]["duration"].get<double>(), 1.68, 0.05 * 1.68);
  const std::string csv = slurp("out/protocol_mu0.5.csv");
  EXPECT_EQ(csv.rfind("# tool = feshbach-opt synthesize", 0), 0u);
  ASSERT_EQ(run("validate --config " + cfg + " --protocol " + (dir_ / "out/protocol_mu0.5.csv").string(), "val"), 0)
      << stderr_;
  const auto v = nlohmann::json::parse(slurp("val/validate.json"));
  EXPECT_LT(v["max_relative_deviation"].get<double>(), 0.03);
  EXPECT_TRUE(v["converged"].get<bool>());
}

TEST_F(Cli, CoarseStepWarns) {
  const auto cfg = write("c.ini", "[physics]\natoms = 1000\n[stroke]\nmu = 0.5\n[solver]\nhold_periods = 0\ndt = 0.05\n");
  ASSERT_EQ(run("validate --config " + cfg), 0) << stderr_;
  EXPECT_NE(stderr_.find("not converged"), std::string::npos) << stderr_;
  const auto v = nlohmann::json::parse(slurp("out/validate.json"));
  EXPECT_FALSE(v["converged"].get<bool>());
}

TEST_F(Cli, EmptySweepGivesEmptyTable) {
  const auto cfg = write("sw.ini", "[physics]\natoms = 2000\n[sweep]\nscalings =\n");
  ASSERT_EQ(run("sweep --config " + cfg), 0) << stderr_;
  const auto j = nlohmann::json::parse(slurp("out/sweep.json"));
  EXPECT_TRUE(j["rows"].empty());
  EXPECT_TRUE(j["transition_tau"].is_null());
}

TEST_F(Cli, MonteCarloIsReproducible) {
  const auto cfg = write("mc.ini", "[physics]\natoms = 1000\n[mc]\ncheck = quench\nn_particles = 2000\nsamples = 41\n");
  ASSERT_EQ(run("mc --config " + cfg + " --seed 99 --threads 2", "a"), 0) << stderr_;
  ASSERT_EQ(run("mc --config " + cfg + " --seed 99", "b"), 0) << stderr_;
  EXPECT_EQ(slurp("a/mc_quench.csv"), slurp("b/mc_quench.csv"));
  EXPECT_NE(slurp("a/mc_quench.csv").find("# seed = 99"), std::string::npos);
}
