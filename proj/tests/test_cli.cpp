#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <sys/wait.h>

#include "cli.hpp"

using namespace pearl;
using namespace pearl::cli;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "pearl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pearl_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

class SeedEnv {
 public:
  explicit SeedEnv(const char* v) { setenv("PEARL_SEED", v, 1); }
  ~SeedEnv() { unsetenv("PEARL_SEED"); }
};

}  // namespace

TEST(Config, EmitParseRoundTrip) {
  ExperimentConfig c;
  c.problem.kind = "nplayer";
  c.problem.n = 4;
  c.problem.d = 3;
  c.problem.bounds.l_b = 2.5;
  c.problem.noise = "gaussian";
  c.problem.sigma = 0.125;
  c.run.taus = {1, 3, 9};
  c.run.schedule = "constant";
  c.run.gamma = 1.0 / 3.0;
  c.run.x0 = "values";
  c.run.x0_values = std::vector<double>(12, -0.1);
  c.run.divergence_threshold = std::numeric_limits<double>::infinity();
  c.run.record_timing = true;
  c.run.tune = {1e-4, 0.5, 3};
  c.verify.suites = {"theorem1"};
  c.verify.t_grid = {8, 16};
  c.output_dir = "some dir/out";
  const std::string text = emit_config(c);
  EXPECT_EQ(parse_config(text), c);
  EXPECT_EQ(emit_config(parse_config(text)), text);
  EXPECT_EQ(parse_config(emit_config(ExperimentConfig{})), ExperimentConfig{});
  EXPECT_EQ(parse_config(emit_config(robot_preset())), robot_preset());
}

TEST(Config, PartialConfigKeepsDefaults) {
  const auto c = parse_config("run:\n  tau: 4\n  rounds: 12\n");
  EXPECT_EQ(c.run.taus, std::vector<std::size_t>{4});
  EXPECT_EQ(c.run.rounds, 12u);
  EXPECT_EQ(c.problem, ProblemSpec{});
  EXPECT_EQ(parse_config(""), ExperimentConfig{});
}

TEST(Config, UnknownKeyIsLineAnchored) {
  try {
    parse_config("problem:\n  kind: robot\nrun:\n  rounds: 3\n  tua: 4\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 5"), std::string::npos) << msg;
    EXPECT_NE(msg.find("tua"), std::string::npos) << msg;
  }
}

TEST(Config, MalformedValuesAreLineAnchored) {
  try {
    parse_config("run:\n  rounds: many\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  try {
    parse_config("run:\n  tau: [1, 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line "), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config("run:\n  rounds: -3\n"), ConfigError);
  EXPECT_THROW(parse_config("run:\n  x0: twos\n"), ConfigError);
  EXPECT_THROW(parse_config("- 1\n- 2\n"), ConfigError);
}

TEST(Config, Validation) {
  ExperimentConfig c;
  c.run.taus = {2, 0};
  EXPECT_THROW(validate(c), ConfigError);
  c = ExperimentConfig{};
  c.run.schedule = "constant";
  EXPECT_THROW(validate(c), ConfigError);
  c = ExperimentConfig{};
  c.problem.kind = "mystery";
  EXPECT_THROW(validate(c), ConfigError);
  EXPECT_NO_THROW(validate(ExperimentConfig{}));
}

TEST(Config, SeedEnvironmentOverride) {
  SeedEnv env("123");
  ExperimentConfig c;
  apply_seed_env(c);
  EXPECT_EQ(c.problem.seed, 123u);
  EXPECT_EQ(c.run.seed, 123u);
}

TEST(Config, BadSeedEnvironment) {
  SeedEnv env("12x");
  ExperimentConfig c;
  EXPECT_THROW(apply_seed_env(c), ConfigError);
}

TEST(Config, RobotPreset) {
  const auto c = robot_preset();
  EXPECT_EQ(c.run.taus, (std::vector<std::size_t>{1, 2, 4, 5, 8, 20}));
  EXPECT_EQ(c.run.schedule, "theoretical-robot");
  EXPECT_EQ(c.problem.noise_variance, 100.0);
  auto g = build_problem(c.problem);
  EXPECT_EQ(g->kind(), "robot");
}

TEST(Cli, RunWritesOneRowPerRound) {
  const auto dir = scratch("run");
  const auto r = invoke({"run", "--problem", "quad-minimax", "--tau", "5", "--rounds", "100", "--out",
                         dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = read_file(dir / "trajectory.csv");
  EXPECT_EQ(count_lines(csv), 102u);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), trajectory_csv_header(2));
  for (const char* f : {"config.yaml", "problem.json", "metadata.json", "summary.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const json meta = json::parse(read_file(dir / "metadata.json"));
  EXPECT_TRUE(meta.contains("problem_hash"));
  fs::remove_all(dir);
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  const std::vector<std::string> common{"run", "--mode", "stochastic", "--tau", "4", "--rounds", "30",
                                        "--seed", "5", "--replicates", "3"};
  auto args_a = common, args_b = common;
  args_a.insert(args_a.end(), {"--out", a.string()});
  args_b.insert(args_b.end(), {"--out", b.string(), "--workers", "3"});
  ASSERT_EQ(invoke(args_a).code, 0);
  ASSERT_EQ(invoke(args_b).code, 0);
  EXPECT_EQ(read_file(a / "trajectory.csv"), read_file(b / "trajectory.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, TauZeroIsRejected) {
  const auto r = invoke({"run", "--tau", "0", "--out", scratch("tau0").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("tau must be >= 1"), std::string::npos) << r.err;
}

TEST(Cli, UnwritableOutputDirectory) {
  const auto blocker = scratch("blocker");
  write_file_atomic(blocker, "not a directory");
  const auto r = invoke({"run", "--rounds", "3", "--out", (blocker / "sub").string()});
  EXPECT_EQ(r.code, kExitIo);
  EXPECT_FALSE(r.err.empty());
  fs::remove_all(blocker);
}

TEST(Cli, ConfigFileFlagsAndEnvPrecedence) {
  const auto dir = scratch("prec");
  fs::create_directories(dir);
  write_file_atomic(dir / "c.yaml", "problem:\n  kind: scalar\n  seed: 1\nrun:\n  rounds: 7\n  seed: 1\n  tau: 2\n");
  {
    SeedEnv env("99");
    const auto r = invoke({"run", "--config", (dir / "c.yaml").string(), "--rounds", "9", "--out",
                           (dir / "o").string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  const auto c = load_config((dir / "o" / "config.yaml").string());
  EXPECT_EQ(c.run.rounds, 9u);  // flag beats file
  EXPECT_EQ(c.run.seed, 99u);   // env beats file
  EXPECT_EQ(c.run.taus, std::vector<std::size_t>{2});
  EXPECT_EQ(c.problem.kind, "scalar");
  fs::remove_all(dir);
}

TEST(Cli, BadConfigExitsWithConfigCode) {
  const auto dir = scratch("badcfg");
  fs::create_directories(dir);
  write_file_atomic(dir / "c.yaml", "run:\n  bogus: 1\n");
  const auto r = invoke({"run", "--config", (dir / "c.yaml").string()});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
  fs::remove_all(dir);
}

TEST(Cli, DivergedRunStillSucceeds) {
  const auto dir = scratch("diverge");
  const auto r = invoke({"run", "--problem", "scalar", "--tau", "1", "--gamma", "50", "--rounds", "100",
                         "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json s = json::parse(read_file(dir / "summary.json"));
  EXPECT_NE(s.dump().find("diverged"), std::string::npos) << s.dump();
  fs::remove_all(dir);
}

TEST(Cli, ReplayReproducesTrajectory) {
  const auto dir = scratch("replay");
  ASSERT_EQ(invoke({"run", "--mode", "stochastic", "--rounds", "20", "--out", dir.string()}).code, 0);
  const auto r = invoke({"run", "--replay", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("replay: trajectory matches"), std::string::npos) << r.out;
  EXPECT_EQ(read_file(dir / "trajectory.csv"), read_file(dir / "replay" / "trajectory.csv"));
  fs::remove_all(dir);
}

TEST(Cli, SweepWritesOneCsvPerTau) {
  const auto dir = scratch("sweep");
  const auto r = invoke({"sweep-tau", "--tau", "1,2,4", "--rounds", "10", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (int t : {1, 2, 4}) EXPECT_TRUE(fs::exists(dir / ("trajectory_tau" + std::to_string(t) + ".csv")));
  fs::remove_all(dir);
}

TEST(Cli, TuneAndHeatmap) {
  const auto dir = scratch("tune");
  auto r = invoke({"tune-gamma", "--tau", "2", "--rounds", "10", "--grid", "1e-4", "1e-1", "4", "--out",
                   (dir / "t").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(read_file(dir / "t" / "tune_tau2.csv")), 5u);
  r = invoke({"heatmap", "--tau", "1,5", "--rounds", "10", "--grid", "1e-3", "1e-1", "3", "--out",
              (dir / "h").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_file(dir / "h" / "heatmap.csv").substr(0, 18), "gamma,tau_1,tau_5\n");
  fs::remove_all(dir);
}

TEST(Cli, ParamsAndVerify) {
  auto r = invoke({"params", "--problem", "scalar"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json p = json::parse(r.out);
  EXPECT_NEAR(p.at("parameters").at("mu").get<double>(), 1.0, 1e-14);
  EXPECT_NEAR(p.at("parameters").at("ell").get<double>(), 2.0, 1e-12);
  const auto dir = scratch("verify");
  r = invoke({"verify", "--problem", "sine", "--suite", "assumptions", "--samples", "500", "--strict",
              "--out", dir.string()});
  EXPECT_EQ(r.code, 0) << r.err << r.out;
  EXPECT_TRUE(fs::exists(dir / "reports.json"));
  fs::remove_all(dir);
}

TEST(Cli, UnknownFlagAndMissingSubcommand) {
  EXPECT_NE(invoke({"run", "--nonsense"}).code, 0);
  EXPECT_NE(invoke({}).code, 0);
  EXPECT_EQ(invoke({"--help"}).code, 0);
}

// The installed executable, not just the in-process entry point.
TEST(Cli, ExecutableExitCodes) {
  const char* exe = std::getenv("PEARL_CLI");
  if (!exe) GTEST_SKIP() << "PEARL_CLI not set";
  const auto dir = scratch("exe");
  const std::string base = std::string("\"") + exe + "\" ";
  int st = std::system((base + "run --rounds 5 --out \"" + dir.string() + "\" > /dev/null").c_str());
  EXPECT_EQ(WEXITSTATUS(st), 0);
  st = std::system((base + "run --tau 0 > /dev/null 2>&1").c_str());
  EXPECT_EQ(WEXITSTATUS(st), kExitConfig);
  fs::remove_all(dir);
}
