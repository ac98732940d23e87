// Runs the diatomid executable end to end in scratch directories.

#include "diatom/diatom.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace diatom;

namespace {

struct CommandResult {
  int status = -1;
  std::string out;
};

CommandResult run(const std::string& args) {
  const std::string cmd = std::string(DIATOMID_PATH) + " " + args + " 2>/dev/null";
  CommandResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

double value_after(const std::string& text, const std::string& key) {
  const auto pos = text.find(key + " ");
  if (pos == std::string::npos) return std::nan("");
  return std::stod(text.substr(pos + key.size() + 1));
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("diatomid_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string out_flag() const { return "--out " + dir_.string(); }
  fs::path path(const std::string& name) const { return dir_ / name; }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, SimulateDefaults) {
  const CommandResult r = run("simulate --params " SAMPLES_DIR "/reference.params " + out_flag());
  ASSERT_EQ(r.status, 0);
  EXPECT_NEAR(value_after(r.out, "growth_rate"), 0.335, 0.01);
  const Trajectory traj = load_trajectory_csv(path("trajectory.csv").string());
  EXPECT_EQ(traj.size(), 50u);
  std::ifstream diag(path("diagnostics.csv"));
  std::stringstream text;
  text << diag.rdbuf();
  EXPECT_NE(text.str().find("positivity,0,50,0,1"), std::string::npos) << text.str();
  EXPECT_NE(text.str().find("quota_threshold,"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("sensitivities.csv")));
}

TEST_F(Cli, SimulateWithSensitivities) {
  ASSERT_EQ(run("simulate --t-end 5 --sensitivities " + out_flag()).status, 0);
  std::ifstream in(path("sensitivities.csv"));
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 72);
}

TEST_F(Cli, ZeroBiomassKeepsMediumAtInflow) {
  ASSERT_EQ(run("simulate --initial 15,2000,3,4,0,0 " + out_flag()).status, 0);
  const Trajectory traj = load_trajectory_csv(path("trajectory.csv").string());
  ASSERT_EQ(traj.size(), 50u);
  for (const auto& x : traj.states) {
    EXPECT_EQ(x[kN], 15.0);
    EXPECT_EQ(x[kC], 2000.0);
    EXPECT_EQ(x[kD], 0.0);
    EXPECT_EQ(x[kM], 0.0);
  }
}

TEST_F(Cli, StepHalving) {
  ASSERT_EQ(run("simulate " + out_flag()).status, 0);
  const Trajectory coarse = load_trajectory_csv(path("trajectory.csv").string());
  ASSERT_EQ(run("simulate --dt 0.005 " + out_flag()).status, 0);
  const Trajectory fine = load_trajectory_csv(path("trajectory.csv").string());
  double diff = 0, scale = 0;
  for (std::size_t j = 0; j < fine.size(); ++j) {
    diff = std::max(diff, (coarse.states[j] - fine.states[j]).cwiseAbs().maxCoeff());
    scale = std::max(scale, fine.states[j].cwiseAbs().maxCoeff());
  }
  EXPECT_LT(diff / scale, 1e-7);
}

TEST_F(Cli, ParseErrorsExitWithOne) {
  EXPECT_EQ(run("simulate --dt banana " + out_flag()).status, 1);
  EXPECT_EQ(run("simulate --bogus " + out_flag()).status, 1);
  EXPECT_EQ(run("").status, 1);
  {
    std::ofstream bad(path("bad.params"));
    bad << "a = 1\n";
  }
  EXPECT_EQ(run("simulate --params " + path("bad.params").string() + " " + out_flag()).status, 1);
  EXPECT_EQ(run("simulate --sample-period 0.003 " + out_flag()).status, 1);
  EXPECT_EQ(run("--help").status, 0);
}

TEST_F(Cli, SimulateBlowUpExitsWithTwo) {
  ParameterSet p = reference_parameters();
  p.V_max_C *= 1e12;
  save_parameters(path("wild.params").string(), p);
  EXPECT_EQ(run("simulate --params " + path("wild.params").string() + " " + out_flag()).status, 2);
}

TEST_F(Cli, IdentifyFromTheTarget) {
  const CommandResult r = run("identify --guess " SAMPLES_DIR "/reference.params " + out_flag());
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(value_after(r.out, "final_relative_residual"), 0.0);
  EXPECT_EQ(load_parameters(path("identified.params").string()), reference_parameters());
  std::ifstream log(path("stage_log.csv"));
  std::string header;
  std::getline(log, header);
  EXPECT_EQ(header, "window_end,phase,iterations,rel_residual,failed,cause");
}

TEST_F(Cli, IdentifyPerturbedGuess) {
  const CommandResult r = run("identify --epsilon 0.01 --seed 3 " + out_flag());
  ASSERT_EQ(r.status, 0);
  EXPECT_LT(value_after(r.out, "final_relative_residual"), 1e-10);
}

TEST_F(Cli, IdentifyFromObservationFile) {
  ASSERT_EQ(run("simulate " + out_flag()).status, 0);
  const CommandResult r = run("identify --observations " + path("trajectory.csv").string() +
                    " --guess " SAMPLES_DIR "/reference.params " + out_flag());
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(value_after(r.out, "final_relative_residual"), 0.0);
}

TEST_F(Cli, IdentifyBlowUpExitsWithTwo) {
  ParameterSet p = reference_parameters();
  p.V_max_C *= 1e12;
  save_parameters(path("guess.params").string(), p);
  const CommandResult r = run("identify --guess " + path("guess.params").string() + " " + out_flag());
  EXPECT_EQ(r.status, 2);
  std::ifstream log(path("stage_log.csv"));
  std::stringstream text;
  text << log.rdbuf();
  EXPECT_NE(text.str().find("blow_up@t="), std::string::npos) << text.str();
}

TEST_F(Cli, EvaluateZeroAmplitude) {
  const CommandResult r = run("evaluate --epsilon 0 --trials 5 " + out_flag());
  ASSERT_EQ(r.status, 0);
  std::ifstream in(path("statistics.csv"));
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header,
            "epsilon,sampling_period,n_trials,success_rate_pct,mean_residual,mean_max_error_pct,"
            "base_seed");
  EXPECT_EQ(row, "0,1,5,100,0,0,0");
}

TEST_F(Cli, EvaluateIsDeterministic) {
  ASSERT_EQ(run("evaluate --epsilon 0.01,0.05 --trials 2 --seed 5 " + out_flag()).status, 0);
  std::ifstream a(path("statistics.csv"));
  std::stringstream first;
  first << a.rdbuf();
  ASSERT_EQ(run("evaluate --epsilon 0.01,0.05 --trials 2 --seed 5 --threads 2 " + out_flag()).status, 0);
  std::ifstream b(path("statistics.csv"));
  std::stringstream second;
  second << b.rdbuf();
  EXPECT_EQ(first.str(), second.str());
  std::ifstream trials(path("trials.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(trials, line)) ++rows;
  EXPECT_EQ(rows, 4);
}
