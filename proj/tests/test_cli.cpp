#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "klsplit/cli.hpp"
#include "klsplit/errors.hpp"
#include "klsplit/io.hpp"

using namespace klsplit;
using namespace klsplit::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "klsplit_cli_test" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& j) {
  const fs::path p = dir / (name + ".json");
  std::ofstream(p) << j.dump(2);
  return p;
}

json read(const fs::path& p) {
  json j;
  std::ifstream(p) >> j;
  return j;
}

const json kAbs = {{"seed", 1}, {"problem", {{"type", "abs"}}}, {"schedule", {{"step", 0.3}}}, {"x0", {1.0}}};

}  // namespace

TEST_CASE("config validation") {
  json no_seed = kAbs;
  no_seed.erase("seed");
  CHECK_THROWS_AS(parse_experiment(no_seed), ConfigError);
  json bad_solver = kAbs;
  bad_solver["solver"] = "sgd";
  CHECK_THROWS_AS(parse_experiment(bad_solver), ConfigError);
  json bad_type = kAbs;
  bad_type["problem"]["type"] = "rosenbrock";
  CHECK_THROWS_AS(parse_experiment(bad_type), ConfigError);

  const Experiment e = parse_experiment(kAbs, "abs");
  CHECK(e.solver == "proximal_point");
  CHECK(e.problem.p() == 1);
}

TEST_CASE("run writes a trace and a summary") {
  const fs::path dir = fresh_dir("run");
  const fs::path cfg = write_config(dir, "abs", kAbs);
  RunArgs args;
  args.configs = {cfg.string()};
  args.out = (dir / "out").string();
  args.dump_iterates = true;
  std::ostringstream log;
  REQUIRE(cmd_run(args, log) == kOk);
  const IterateTrace t = read_trace_csv(dir / "out" / "abs_trace.csv");
  CHECK(t.records[4].f_val == 0.0);
  const json s = read(dir / "out" / "abs_summary.json");
  CHECK(s["status"] == "converged");
  CHECK(s["certificate"]["verdict"] == "pass");
  CHECK(fs::exists(dir / "out" / "abs_trace.iterates.csv"));
}

TEST_CASE("OUTPUT_DIR is honoured and jobs run in parallel") {
  const fs::path dir = fresh_dir("env");
  RunArgs args;
  for (int i = 0; i < 3; ++i) {
    json c = kAbs;
    c["x0"] = {1.0 + i};
    args.configs.push_back(write_config(dir, "abs" + std::to_string(i), c).string());
  }
  args.jobs = 2;
  ::setenv("OUTPUT_DIR", (dir / "env_out").c_str(), 1);
  std::ostringstream log;
  CHECK(cmd_run(args, log) == kOk);
  ::unsetenv("OUTPUT_DIR");
  for (int i = 0; i < 3; ++i) CHECK(fs::exists(dir / "env_out" / ("abs" + std::to_string(i) + "_summary.json")));
}

TEST_CASE("exit codes") {
  const fs::path dir = fresh_dir("codes");
  std::ostringstream log;
  RunArgs args;
  args.out = dir.string();

  std::ofstream(dir / "broken.json") << "{ not json";
  args.configs = {(dir / "broken.json").string()};
  CHECK(cmd_run(args, log) == kConfigError);

  args.configs = {(dir / "absent.json").string()};
  CHECK(cmd_run(args, log) == kConfigError);

  // step 1 / L is too long for the power potential with L = 12
  const json too_long = {{"seed", 1},
                         {"problem", {{"type", "power_potential"}, {"q", 4}}},
                         {"schedule", {{"step", 0.1}}},
                         {"x0", {1.0}}};
  args.configs = {write_config(dir, "long", too_long).string()};
  CHECK(cmd_run(args, log) == kScheduleError);

  json forced = too_long;
  forced["problem"] = {{"type", "quadratic"}, {"Q", {{1.0}}}, {"b", {0.0}}};
  forced["schedule"] = {{"step", 10.0}, {"override_hp", true}};
  args.configs = {write_config(dir, "diverge", forced).string()};
  CHECK(cmd_run(args, log) == kDivergence);
  CHECK(fs::exists(dir / "diverge_trace.csv"));

  const json afbe = {{"seed", 1},
                     {"solver", "afbe"},
                     {"problem", {{"type", "decomposition"}, {"m", 5}, {"n", 5}, {"r", 1}, {"s", 2}}},
                     {"schedule", {{"lambda", 0.5}, {"mu", 0.5}}},
                     {"errors", {{"sigma", 0.9}, {"rho", 0.5}}}};
  args.configs = {write_config(dir, "afbe", afbe).string()};
  CHECK(cmd_run(args, log) == kScheduleError);
}

TEST_CASE("monitor passes good traces and fails bad ones") {
  const fs::path dir = fresh_dir("monitor");
  RunArgs args;
  args.configs = {write_config(dir, "abs", kAbs).string()};
  args.out = dir.string();
  std::ostringstream log;
  REQUIRE(cmd_run(args, log) == kOk);

  MonitorArgs m;
  m.trace = (dir / "abs_trace.csv").string();
  m.out = (dir / "report.json").string();
  CHECK(cmd_monitor(m, log) == kOk);
  CHECK(read(dir / "report.json")["hard_pass"] == true);

  // claim a much larger sufficient-decrease constant than the run earned
  std::ofstream(dir / "bad.csv") << "k,f_val,step_norm,slope_norm,a_k,b_k,eps_k,alpha_k,beta_k,region_flag\n"
                                 << "0,1,,1,100,,,,,\n1,0.9,0.1,1,100,1,0,,,\n2,0.8,0.1,1,,1,0,,,\n";
  m.trace = (dir / "bad.csv").string();
  CHECK(cmd_monitor(m, log) == kCheckFailed);

  m.trace = (dir / "nothing.csv").string();
  CHECK(cmd_monitor(m, log) == kConfigError);
}

TEST_CASE("rates reports and refuses short traces") {
  const fs::path dir = fresh_dir("rates");
  std::ofstream(dir / "short.csv") << "k,f_val,step_norm,slope_norm,a_k,b_k,eps_k,alpha_k,beta_k,region_flag\n"
                                   << "0,1,,,,,,,,\n1,0.5,0.5,,,,,,,\n2,0.25,0.25,,,,,,,\n";
  RatesArgs r;
  r.trace = (dir / "short.csv").string();
  r.out = (dir / "r.json").string();
  std::ostringstream log;
  CHECK(cmd_rates(r, log) == kInsufficientData);

  const json quad = {{"seed", 1},
                     {"problem", {{"type", "quadratic"}, {"Q", {{1.0}}}, {"b", {0.0}}}},
                     {"schedule", {{"step", 0.3}}},
                     {"stop", {{"max_iter", 60}, {"step_tol", 0.0}, {"slope_tol", 0.0}}},
                     {"x0", {1.0}}};
  RunArgs args;
  args.configs = {write_config(dir, "quad", quad).string()};
  args.out = dir.string();
  args.dump_iterates = true;
  REQUIRE(cmd_run(args, log) == kOk);
  r.trace = (dir / "quad_trace.csv").string();
  r.iterates = (dir / "quad_trace.iterates.csv").string();
  r.x_star = {0.0};
  r.plot_dir = (dir / "plots").string();
  REQUIRE(cmd_rates(r, log) == kOk);
  const json rep = read(dir / "r.json");
  CHECK(rep["prediction"]["regime"] == "exponential");
  CHECK(rep["fit"]["chosen"] == "exponential");
  CHECK(rep["agreement"]["agree"] == true);
  CHECK(fs::exists(dir / "plots" / "value_vs_k.svg"));
}

TEST_CASE("decompose command") {
  const fs::path dir = fresh_dir("decompose");
  DecomposeArgs d;
  d.m = d.n = 10;
  d.r = 1;
  d.s = 4;
  d.seed = 3;
  d.out = dir.string();
  std::ostringstream log;
  REQUIRE(cmd_decompose(d, log) == kOk);
  const json rep = read(dir / "recovery.json");
  CHECK(rep["recovery"]["rel_error_X"].get<double>() < 1e-6);
  CHECK(fs::exists(dir / "X.csv"));

  std::ofstream(dir / "bad.csv") << "2,2,1,1,0\n1,2\n3\n";
  DecomposeArgs bad;
  bad.matrix = (dir / "bad.csv").string();
  bad.out = dir.string();
  CHECK(cmd_decompose(bad, log) == kConfigError);

  // a bare observation without a planted pair runs from zero and reports no recovery errors
  std::ofstream(dir / "bare.csv") << "2,2,0,0,0\n1,2\n3,4\n";
  DecomposeArgs bare;
  bare.matrix = (dir / "bare.csv").string();
  bare.out = (dir / "bare").string();
  CHECK(cmd_decompose(bare, log) == kOk);
  const json b = read(dir / "bare" / "recovery.json");
  CHECK(b["recovery"]["status"] == "not_applicable");
  CHECK(b["recovery"]["residual"].get<double>() == doctest::Approx(std::sqrt(30.0)));
}
